//! Cookie stacks, environment laws and lazily realized environments.
//!
//! A site carries a stack of `m` cookies (jump laws used on the first `m`
//! visits) after which every visit uses the zero-mean background law. An
//! [`EnvironmentLaw`] says how stacks are assigned to sites; a
//! [`RealizedEnvironment`] is one draw from it, realized site by site on
//! demand, together with the number of cookies already eaten at each site.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::{compensated_sum, span_gcd, JumpDistribution};
use crate::error::{Error, Result};
use crate::seed::site_uniform;
use crate::site_map::SiteMap;

const MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CookieStack {
    cookies: Vec<JumpDistribution>,
    background: Arc<JumpDistribution>,
}

impl CookieStack {
    pub fn new(cookies: Vec<JumpDistribution>, background: Arc<JumpDistribution>) -> Self {
        Self {
            cookies,
            background,
        }
    }

    /// A stack whose every cookie equals the background law.
    pub fn plain(m: usize, background: Arc<JumpDistribution>) -> Self {
        Self::new(vec![(*background).clone(); m], background)
    }

    pub fn cookies(&self) -> &[JumpDistribution] {
        &self.cookies
    }

    pub fn background(&self) -> &JumpDistribution {
        &self.background
    }

    pub fn depth(&self) -> usize {
        self.cookies.len()
    }

    /// Law of the `j`-th visit (1-based); the background once the stack is exhausted.
    #[inline]
    pub fn law(&self, visit: usize) -> &JumpDistribution {
        debug_assert!(visit >= 1);
        self.cookies.get(visit - 1).unwrap_or(&self.background)
    }
}

/// Total drift stored in a stack, `Σ_j d(ω_{x,j})` over its cookies.
pub fn stack_drift(stack: &CookieStack) -> f64 {
    compensated_sum(stack.cookies.iter().map(JumpDistribution::mean))
}

/// Serialized form of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    #[serde(alias = "M")]
    pub m: usize,
    pub background: JumpDistribution,
    pub generator: GeneratorSpec,
    /// Truncation depth used to make an unbounded law finite, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// The same stack at every site.
    Deterministic { stacks: Vec<Vec<JumpDistribution>> },
    /// Each site independently draws stack `i` with probability `weights[i]`.
    Mixture {
        stacks: Vec<Vec<JumpDistribution>>,
        weights: Vec<f64>,
    },
    /// Stacks listed per site; unlisted sites use `stacks[default]`.
    Explicit {
        stacks: Vec<Vec<JumpDistribution>>,
        default: usize,
        sites: Vec<(i64, usize)>,
    },
}

#[derive(Debug, Clone)]
enum Generator {
    Deterministic,
    Mixture { cumulative: Vec<f64>, weights: Vec<f64> },
    Explicit { default: u32, origin: i64, table: Vec<u32> },
}

impl Generator {
    fn kind(&self) -> &'static str {
        match self {
            Generator::Deterministic => "deterministic",
            Generator::Mixture { .. } => "mixture",
            Generator::Explicit { .. } => "explicit",
        }
    }
}

/// The generative law of the cookie environment.
#[derive(Debug, Clone)]
pub struct EnvironmentLaw {
    spec: LawSpec,
    background: Arc<JumpDistribution>,
    stacks: Vec<CookieStack>,
    generator: Generator,
    background_bound: u64,
    max_jump_bound: u64,
}

impl EnvironmentLaw {
    pub fn from_spec(spec: LawSpec) -> Result<Self> {
        if spec.m == 0 {
            return Err(Error::InvalidLaw("M must be at least 1".into()));
        }
        let background = Arc::new(spec.background.clone());
        let raw_stacks = match &spec.generator {
            GeneratorSpec::Deterministic { stacks } => {
                if stacks.len() != 1 {
                    return Err(Error::InvalidLaw(format!(
                        "deterministic generator takes exactly one stack, got {}",
                        stacks.len()
                    )));
                }
                stacks
            }
            GeneratorSpec::Mixture { stacks, .. } | GeneratorSpec::Explicit { stacks, .. } => stacks,
        };
        if raw_stacks.is_empty() {
            return Err(Error::InvalidLaw("generator has no stacks".into()));
        }
        let mut stacks = Vec::with_capacity(raw_stacks.len());
        for (i, cookies) in raw_stacks.iter().enumerate() {
            if cookies.len() != spec.m {
                return Err(Error::InvalidLaw(format!(
                    "stack {i} has {} cookies, expected M = {}",
                    cookies.len(),
                    spec.m
                )));
            }
            stacks.push(CookieStack::new(cookies.clone(), background.clone()));
        }
        let generator = match &spec.generator {
            GeneratorSpec::Deterministic { .. } => Generator::Deterministic,
            GeneratorSpec::Mixture { weights, .. } => {
                if weights.len() != stacks.len() {
                    return Err(Error::InvalidLaw(format!(
                        "{} weights for {} stacks",
                        weights.len(),
                        stacks.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidLaw("mixture weights must be non-negative".into()));
                }
                let total = compensated_sum(weights.iter().copied());
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidLaw(format!("mixture weights sum to {total}")));
                }
                let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Generator::Mixture { cumulative, weights }
            }
            GeneratorSpec::Explicit { default, sites, .. } => {
                let n = stacks.len();
                if *default >= n || sites.iter().any(|&(_, i)| i >= n) {
                    return Err(Error::InvalidLaw("explicit stack index out of range".into()));
                }
                let (origin, table) = match (
                    sites.iter().map(|s| s.0).min(),
                    sites.iter().map(|s| s.0).max(),
                ) {
                    (Some(lo), Some(hi)) => {
                        if hi - lo > 50_000_000 {
                            return Err(Error::InvalidLaw("explicit site range too wide".into()));
                        }
                        let mut table = vec![*default as u32; (hi - lo + 1) as usize];
                        for &(x, i) in sites {
                            table[(x - lo) as usize] = i as u32;
                        }
                        (lo, table)
                    }
                    _ => (0, Vec::new()),
                };
                Generator::Explicit {
                    default: *default as u32,
                    origin,
                    table,
                }
            }
        };
        let background_bound = background.max_abs_offset();
        let max_jump_bound = stacks
            .iter()
            .flat_map(|s| s.cookies.iter())
            .map(JumpDistribution::max_abs_offset)
            .fold(background_bound, u64::max);
        Ok(Self {
            spec,
            background,
            stacks,
            generator,
            background_bound,
            max_jump_bound,
        })
    }

    /// One fixed stack at every site.
    pub fn deterministic(background: JumpDistribution, cookies: Vec<JumpDistribution>, seed: u64) -> Result<Self> {
        Self::from_spec(LawSpec {
            m: cookies.len(),
            background,
            generator: GeneratorSpec::Deterministic {
                stacks: vec![cookies],
            },
            truncation: None,
            seed,
        })
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    /// Same law with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut law = self.clone();
        law.spec.seed = seed;
        law
    }

    pub fn background(&self) -> &JumpDistribution {
        &self.background
    }

    pub fn stacks(&self) -> &[CookieStack] {
        &self.stacks
    }

    pub fn background_bound(&self) -> u64 {
        self.background_bound
    }

    /// Largest `|z|` any cookie or the background can produce.
    pub fn max_jump_bound(&self) -> u64 {
        self.max_jump_bound
    }

    pub fn truncation(&self) -> Option<u64> {
        self.spec.truncation
    }

    pub fn generator_kind(&self) -> &'static str {
        self.generator.kind()
    }

    /// Index into [`stacks`](Self::stacks) of the stack owned by `site`;
    /// a pure function of `(seed, site)`.
    #[inline]
    pub fn stack_index(&self, site: i64) -> usize {
        match &self.generator {
            Generator::Deterministic => 0,
            Generator::Mixture { cumulative, .. } => {
                let u = site_uniform(self.spec.seed, site);
                cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(cumulative.len() - 1)
            }
            Generator::Explicit {
                default,
                origin,
                table,
            } => {
                let off = site.wrapping_sub(*origin);
                if off >= 0 && (off as usize) < table.len() {
                    table[off as usize] as usize
                } else {
                    *default as usize
                }
            }
        }
    }

    /// `(weight, stack)` pairs describing the per-site law. An explicit
    /// generator reports its default stack with weight one.
    fn weighted_stacks(&self) -> Vec<(f64, &CookieStack)> {
        match &self.generator {
            Generator::Deterministic => vec![(1.0, &self.stacks[0])],
            Generator::Mixture { weights, .. } => {
                weights.iter().copied().zip(self.stacks.iter()).collect()
            }
            Generator::Explicit { default, .. } => vec![(1.0, &self.stacks[*default as usize])],
        }
    }
}

/// Expected total cookie drift per site under the law. Computed exactly from
/// the mixture weights; for explicit environments it is the drift of the
/// default stack.
pub fn delta(law: &EnvironmentLaw) -> f64 {
    compensated_sum(law.weighted_stacks().into_iter().map(|(w, s)| w * stack_drift(s)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Non-negative cookie drifts, zero-mean background.
    pub a1_nonnegative_cookies: Check,
    /// Bounded, aperiodic, non-degenerate background.
    pub a2_background: Check,
    /// Finite first absolute moment of the cookies.
    pub a3_first_moment: Check,
    pub a3_moment_value: f64,
    /// Spatial independence.
    pub a4_iid: Check,
    /// Weak ellipticity.
    pub a5_ellipticity: Check,
    pub delta: f64,
    pub m: usize,
    pub background_bound: u64,
    pub max_jump_bound: u64,
    pub truncation: Option<u64>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &Check); 5] {
        [
            ("A1", &self.a1_nonnegative_cookies),
            ("A2", &self.a2_background),
            ("A3", &self.a3_first_moment),
            ("A4", &self.a4_iid),
            ("A5", &self.a5_ellipticity),
        ]
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks()
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(name, c)| format!("{name}: {}", c.detail))
            .collect()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, check) in self.checks() {
            let tag = if check.passed { "pass" } else { "FAIL" };
            writeln!(f, "{name} {tag}  {}", check.detail)?;
        }
        write!(
            f,
            "delta = {}  M = {}  B = {}  max jump = {}  truncation = {}",
            self.delta,
            self.m,
            self.background_bound,
            self.max_jump_bound,
            self.truncation.map_or("none".to_string(), |t| t.to_string())
        )
    }
}

/// Checks the law against the standing assumptions. Never fails; every
/// condition is reported.
pub fn validate_assumptions(law: &EnvironmentLaw) -> AssumptionReport {
    let mu = law.background();
    let weighted = law.weighted_stacks();
    let all_stacks: Vec<&CookieStack> = law.stacks.iter().collect();

    let mut bad_cookies = Vec::new();
    for (i, s) in all_stacks.iter().enumerate() {
        for (j, c) in s.cookies.iter().enumerate() {
            if c.mean() < -MEAN_TOLERANCE {
                bad_cookies.push(format!("stack {i} cookie {} has mean {}", j + 1, c.mean()));
            }
        }
    }
    let mu_centered = mu.mean().abs() <= MEAN_TOLERANCE;
    let a1 = match (bad_cookies.is_empty(), mu_centered) {
        (true, true) => Check::new(true, "all cookie drifts non-negative; background mean 0"),
        (false, _) => Check::new(false, bad_cookies.join("; ")),
        (true, false) => Check::new(false, format!("background mean {} is not 0", mu.mean())),
    };

    // Aperiodicity: the steps of the background must generate Z, i.e. the
    // support together with the origin has span 1.
    let lattice = span_gcd(std::iter::once(0).chain(mu.atoms().iter().map(|a| a.0)));
    let a2 = match lattice {
        Err(_) => Check::new(false, "background is the point mass at 0"),
        Ok(1) => Check::new(
            true,
            format!("background supported in [-{0}, {0}], span 1", law.background_bound),
        ),
        Ok(g) => Check::new(false, format!("background steps generate {g}Z, span {g} != 1")),
    };

    let moment = compensated_sum(
        weighted
            .iter()
            .map(|(w, s)| w * compensated_sum(s.cookies.iter().map(JumpDistribution::abs_moment))),
    );
    let a3 = Check::new(
        moment.is_finite(),
        format!("E[sum_j sum_z |z| w_j(z)] = {moment}"),
    );

    let a4 = match law.generator {
        Generator::Explicit { .. } => Check::new(false, "site-dependent explicit environment is not i.i.d."),
        _ => Check::new(true, format!("{} generator, i.i.d. across sites", law.generator_kind())),
    };

    let no_right: Vec<usize> = all_stacks
        .iter()
        .enumerate()
        .filter(|(_, s)| s.cookies[0].mass_where(|z| z >= 1) <= 0.0)
        .map(|(i, _)| i)
        .collect();
    let left_mass = compensated_sum(weighted.iter().map(|(w, s)| {
        w * s
            .cookies
            .iter()
            .map(|c| c.mass_where(|z| z <= 0))
            .product::<f64>()
    }));
    let a5 = if !no_right.is_empty() {
        Check::new(
            false,
            format!("first cookie puts no mass on [1, inf) in stacks {no_right:?}"),
        )
    } else if left_mass <= 0.0 {
        Check::new(false, "no stack lets every cookie step to (-inf, 0]")
    } else {
        Check::new(true, format!("E[prod_j w_j((-inf, 0])] = {left_mass}"))
    };

    AssumptionReport {
        a1_nonnegative_cookies: a1,
        a2_background: a2,
        a3_first_moment: a3,
        a3_moment_value: moment,
        a4_iid: a4,
        a5_ellipticity: a5,
        delta: delta(law),
        m: law.m(),
        background_bound: law.background_bound,
        max_jump_bound: law.max_jump_bound,
        truncation: law.truncation(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SiteRecord {
    /// Stack index plus one; zero when the site is not yet realized.
    stack: u32,
    consumed: u32,
}

/// One environment drawn from a law, with the cookies eaten so far.
#[derive(Debug, Clone)]
pub struct RealizedEnvironment {
    law: Arc<EnvironmentLaw>,
    sites: SiteMap<SiteRecord>,
}

impl RealizedEnvironment {
    pub fn new(law: Arc<EnvironmentLaw>) -> Self {
        Self {
            law,
            sites: SiteMap::new(),
        }
    }

    pub fn law(&self) -> &Arc<EnvironmentLaw> {
        &self.law
    }

    #[inline]
    fn record(&mut self, site: i64) -> &mut SiteRecord {
        let law = &*self.law;
        let rec = self.sites.get_mut(site);
        if rec.stack == 0 {
            rec.stack = law.stack_index(site) as u32 + 1;
        }
        rec
    }

    /// Stack at `site`; identical on every call for the same seed and site.
    pub fn realize_site(&mut self, site: i64) -> &CookieStack {
        let idx = self.record(site).stack as usize - 1;
        &self.law.stacks[idx]
    }

    pub fn consumed(&self, site: i64) -> u32 {
        self.sites.get(site).consumed
    }

    /// Law of the `visit`-th future visit to `site` in the remaining environment.
    pub fn next_step_law(&mut self, site: i64, visit: usize) -> &JumpDistribution {
        let rec = *self.record(site);
        self.law.stacks[rec.stack as usize - 1].law(rec.consumed as usize + visit)
    }

    /// Law for the current visit; the cookie is eaten.
    #[inline]
    pub fn consume(&mut self, site: i64) -> &JumpDistribution {
        let m = self.law.spec.m as u32;
        let rec = self.record(site);
        let visit = rec.consumed as usize + 1;
        let idx = rec.stack as usize - 1;
        if rec.consumed < m {
            rec.consumed += 1;
        }
        self.law.stacks[idx].law(visit)
    }

    /// The environment with the first `counts[x]` cookies removed at each
    /// listed site. Counts saturate at `M`.
    pub fn remove_cookies(&self, counts: impl IntoIterator<Item = (i64, u32)>) -> Self {
        let mut out = self.clone();
        let m = self.law.spec.m as u32;
        for (site, count) in counts {
            let rec = out.record(site);
            rec.consumed = rec.consumed.saturating_add(count).min(m);
        }
        out
    }

    /// Sites with at least one eaten cookie, in increasing order.
    pub fn consumed_counts(&self) -> BTreeMap<i64, u32> {
        self.sites
            .iter()
            .filter(|(_, r)| r.consumed > 0)
            .map(|(x, r)| (x, r.consumed))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(atoms: &[(i64, f64)]) -> JumpDistribution {
        JumpDistribution::new(atoms.iter().copied()).unwrap()
    }

    fn srw() -> JumpDistribution {
        JumpDistribution::simple_symmetric()
    }

    fn mixture_law(seed: u64) -> EnvironmentLaw {
        EnvironmentLaw::from_spec(LawSpec {
            m: 2,
            background: srw(),
            generator: GeneratorSpec::Mixture {
                stacks: vec![
                    vec![JumpDistribution::point_mass(1), srw()],
                    vec![d(&[(-1, 0.25), (3, 0.75)]), JumpDistribution::point_mass(2)],
                ],
                weights: vec![0.5, 0.5],
            },
            truncation: None,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn deterministic_same_stack_everywhere() {
        let law = Arc::new(
            EnvironmentLaw::deterministic(srw(), vec![d(&[(-1, 0.5), (2, 0.5)])], 1).unwrap(),
        );
        let mut env = RealizedEnvironment::new(law);
        let first = env.realize_site(0).clone();
        for x in -50..50 {
            assert_eq!(env.realize_site(x), &first);
        }
    }

    #[test]
    fn mixture_frequency() {
        let law = Arc::new(mixture_law(77));
        let mut env = RealizedEnvironment::new(law.clone());
        let n = 10_000;
        let hits = (0..n)
            .filter(|&x| env.realize_site(x).cookies()[0] == JumpDistribution::point_mass(1))
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 5.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn realization_deterministic() {
        let law = Arc::new(mixture_law(5));
        let mut a = RealizedEnvironment::new(law.clone());
        let mut b = RealizedEnvironment::new(law);
        // Different access orders, same answers.
        let fwd: Vec<CookieStack> = (-20..20).map(|x| a.realize_site(x).clone()).collect();
        let bwd: Vec<CookieStack> = (-20..20).rev().map(|x| b.realize_site(x).clone()).collect();
        assert!(fwd.iter().eq(bwd.iter().rev()));
        assert_eq!(a.realize_site(3).clone(), a.realize_site(3).clone());
    }

    #[test]
    fn next_step_law_indexing() {
        let law = Arc::new(mixture_law(9));
        let mut env = RealizedEnvironment::new(law.clone());
        for x in 0..10 {
            assert_eq!(env.next_step_law(x, 3), &srw());
            let last = env.realize_site(x).cookies()[1].clone();
            assert_eq!(env.next_step_law(x, 2), &last);
        }
        let single = Arc::new(
            EnvironmentLaw::deterministic(srw(), vec![JumpDistribution::point_mass(1)], 0).unwrap(),
        );
        let mut env = RealizedEnvironment::new(single);
        assert_eq!(env.next_step_law(4, 1), &JumpDistribution::point_mass(1));
        assert_eq!(env.next_step_law(4, 2), &srw());
    }

    #[test]
    fn remove_cookies_examples() {
        let law = Arc::new(mixture_law(13));
        let mut env = RealizedEnvironment::new(law.clone());
        let mut same = env.remove_cookies(std::iter::empty());
        for x in -5..5 {
            for j in 1..4 {
                assert_eq!(env.next_step_law(x, j).clone(), *same.next_step_law(x, j));
            }
        }
        let mut empty = env.remove_cookies((-5..5).map(|x| (x, 2)));
        for x in -5..5 {
            assert_eq!(empty.next_step_law(x, 1), &srw());
        }
        let mut shifted = env.remove_cookies([(0, 1)]);
        let second = env.next_step_law(0, 2).clone();
        assert_eq!(shifted.next_step_law(0, 1), &second);
        assert_eq!(shifted.consumed(0), 1);
    }

    #[test]
    fn stack_drift_examples() {
        let mu = Arc::new(srw());
        assert_eq!(stack_drift(&CookieStack::plain(3, mu.clone())), 0.0);
        let p1 = JumpDistribution::point_mass(1);
        assert_eq!(stack_drift(&CookieStack::new(vec![p1.clone(), p1], mu.clone())), 2.0);
        assert_eq!(stack_drift(&CookieStack::new(vec![d(&[(-1, 0.25), (3, 0.75)])], mu)), 2.0);
    }

    #[test]
    fn delta_examples() {
        let l = EnvironmentLaw::deterministic(srw(), vec![d(&[(-1, 0.5), (2, 0.5)])], 0).unwrap();
        assert_eq!(delta(&l), 0.5);
        let mix = EnvironmentLaw::from_spec(LawSpec {
            m: 2,
            background: srw(),
            generator: GeneratorSpec::Mixture {
                stacks: vec![
                    vec![srw(), srw()],
                    vec![JumpDistribution::point_mass(2), JumpDistribution::point_mass(2)],
                ],
                weights: vec![0.5, 0.5],
            },
            truncation: None,
            seed: 0,
        })
        .unwrap();
        assert_eq!(delta(&mix), 2.0);
        let plain = EnvironmentLaw::deterministic(srw(), vec![srw(), srw()], 0).unwrap();
        assert_eq!(delta(&plain), 0.0);
    }

    #[test]
    fn validate_examples() {
        let ok = EnvironmentLaw::deterministic(srw(), vec![d(&[(-1, 0.5), (2, 0.5)])], 0).unwrap();
        let r = validate_assumptions(&ok);
        assert!(r.all_passed(), "{r}");

        let even = EnvironmentLaw::deterministic(
            d(&[(-2, 0.5), (2, 0.5)]),
            vec![d(&[(-2, 0.5), (2, 0.5)])],
            0,
        )
        .unwrap();
        let r = validate_assumptions(&even);
        assert!(!r.a2_background.passed);
        assert!(r.a1_nonnegative_cookies.passed);

        let left = EnvironmentLaw::deterministic(srw(), vec![JumpDistribution::point_mass(-1)], 0).unwrap();
        let r = validate_assumptions(&left);
        assert!(!r.a5_ellipticity.passed);
        // δ₋₁ also has negative drift.
        assert!(!r.a1_nonnegative_cookies.passed);

        let lazy_zero = EnvironmentLaw::deterministic(
            JumpDistribution::point_mass(0),
            vec![JumpDistribution::point_mass(1)],
            0,
        )
        .unwrap();
        assert!(!validate_assumptions(&lazy_zero).a2_background.passed);

        // All cookies forced right: second clause of A5 fails.
        let right = EnvironmentLaw::deterministic(srw(), vec![JumpDistribution::point_mass(1)], 0).unwrap();
        let r = validate_assumptions(&right);
        assert!(!r.a5_ellipticity.passed);
        assert_eq!(r.a3_moment_value, 1.0);
    }

    #[test]
    fn structural_errors() {
        let bad_len = LawSpec {
            m: 2,
            background: srw(),
            generator: GeneratorSpec::Deterministic {
                stacks: vec![vec![srw()]],
            },
            truncation: None,
            seed: 0,
        };
        assert!(EnvironmentLaw::from_spec(bad_len).is_err());
        let bad_weights = LawSpec {
            m: 1,
            background: srw(),
            generator: GeneratorSpec::Mixture {
                stacks: vec![vec![srw()], vec![srw()]],
                weights: vec![0.5, 0.6],
            },
            truncation: None,
            seed: 0,
        };
        assert!(EnvironmentLaw::from_spec(bad_weights).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let text = r#"{
            "M": 1,
            "background": [[-1, 0.5], [1, 0.5]],
            "generator": {"type": "deterministic", "stacks": [[[[-1, 0.25], [3, 0.75]]]]},
            "seed": 17
        }"#;
        let spec: LawSpec = serde_json::from_str(text).unwrap();
        let law = EnvironmentLaw::from_spec(spec.clone()).unwrap();
        assert_eq!(delta(&law), 2.0);
        let back: LawSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn removal_composes(
                seed in any::<u64>(),
                l1 in prop::collection::vec(0u32..4, 8),
                l2 in prop::collection::vec(0u32..4, 8),
            ) {
                let law = Arc::new(mixture_law(seed));
                let m = law.m() as u32;
                let env = RealizedEnvironment::new(law);
                let first: Vec<(i64, u32)> = (0..8).map(|i| (i as i64 - 4, l1[i])).collect();
                let second: Vec<(i64, u32)> = (0..8).map(|i| (i as i64 - 4, l2[i])).collect();
                let mut twice = env.remove_cookies(first.clone()).remove_cookies(second);
                let mut once = env.remove_cookies((0..8).map(|i| (i as i64 - 4, (l1[i] + l2[i]).min(m))));
                let mut orig = env.clone();
                for x in -4..4i64 {
                    let i = (x + 4) as usize;
                    for j in 1..5 {
                        prop_assert_eq!(twice.next_step_law(x, j).clone(), once.next_step_law(x, j).clone());
                        // Reduced environment only answers laws the original
                        // offers at the same or a later visit index.
                        let shift = (l1[i] + l2[i]).min(m) as usize;
                        prop_assert_eq!(once.next_step_law(x, j).clone(), orig.next_step_law(x, j + shift).clone());
                    }
                }
            }
        }

        #[test]
        fn delta_matches_site_average() {
            let law = Arc::new(mixture_law(2718));
            let mut env = RealizedEnvironment::new(law.clone());
            let n = 100_000usize;
            let drifts: Vec<f64> = (0..n as i64).map(|x| stack_drift(env.realize_site(x))).collect();
            let mean = drifts.iter().sum::<f64>() / n as f64;
            let var = drifts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - delta(&law)).abs() <= 4.0 * (var / n as f64).sqrt());
        }
    }
}
