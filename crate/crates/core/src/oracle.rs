//! Exact exit analysis of a finite interval by absorbing-chain solves.
//!
//! Inside an interval of width `W` with `M` cookies per site, the walk is a
//! Markov chain on `(position, consumed counts)` with `W (M+1)^W` transient
//! states. Consumed counts only grow, so the chain is block triangular in the
//! count vector: blocks are solved from the most consumed configuration down,
//! each one a small dense system over the positions whose stacks are
//! exhausted. Exit probabilities, the expected consumed drift and the
//! expected exit time share the same factorization.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::distributions::{compensated_sum, JumpDistribution};
use crate::env::{stack_drift, CookieStack, EnvironmentLaw, GeneratorSpec, LawSpec};
use crate::error::{Error, Result};
use crate::seed::WalkRng;
use crate::stats::{binomial_z, par_replicas, Merge, RunningStats};
use crate::walk::{first_passage, replica, Exit};

pub const DEFAULT_STATE_BUDGET: u64 = 5_000_000;

/// Serialized form of an [`OracleInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// Open interval `(lower, upper)`.
    pub interval: (i64, i64),
    pub start: i64,
    pub background: JumpDistribution,
    /// Cookie stacks of the sites `lower + 1 ..= upper - 1`, in order.
    pub stacks: Vec<Vec<JumpDistribution>>,
}

/// A fully realized environment on `(lower, upper)` and a start inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec", into = "InstanceSpec")]
pub struct OracleInstance {
    lower: i64,
    upper: i64,
    start: i64,
    m: usize,
    background: Arc<JumpDistribution>,
    stacks: Vec<CookieStack>,
}

impl OracleInstance {
    pub fn new(
        lower: i64,
        upper: i64,
        start: i64,
        background: JumpDistribution,
        stacks: Vec<Vec<JumpDistribution>>,
    ) -> Result<Self> {
        if !(lower < start && start < upper) {
            return Err(Error::InvalidInstance(format!(
                "need lower < start < upper, got {lower} < {start} < {upper}"
            )));
        }
        let width = (upper - lower - 1) as usize;
        if stacks.len() != width {
            return Err(Error::InvalidInstance(format!(
                "{} stacks for {width} interior sites",
                stacks.len()
            )));
        }
        let m = stacks[0].len();
        if m == 0 || stacks.iter().any(|s| s.len() != m) {
            return Err(Error::InvalidInstance("every site needs the same positive number of cookies".into()));
        }
        let background = Arc::new(background);
        let stacks = stacks
            .into_iter()
            .map(|c| CookieStack::new(c, background.clone()))
            .collect();
        Ok(Self {
            lower,
            upper,
            start,
            m,
            background,
            stacks,
        })
    }

    pub fn lower(&self) -> i64 {
        self.lower
    }

    pub fn upper(&self) -> i64 {
        self.upper
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.stacks.len()
    }

    pub fn background(&self) -> &JumpDistribution {
        &self.background
    }

    pub fn stacks(&self) -> &[CookieStack] {
        &self.stacks
    }

    /// `Σ_k d̄(ω_k)` over the interior sites.
    pub fn total_cookie_drift(&self) -> f64 {
        compensated_sum(self.stacks.iter().map(stack_drift))
    }

    /// The same environment as a law for the simulation engine. Sites outside
    /// the interval get plain background stacks; the walk never uses them
    /// before exiting.
    pub fn to_law(&self, seed: u64) -> Result<EnvironmentLaw> {
        let mut stacks = vec![vec![(*self.background).clone(); self.m]];
        let mut sites = Vec::with_capacity(self.width());
        for (i, s) in self.stacks.iter().enumerate() {
            stacks.push(s.cookies().to_vec());
            sites.push((self.lower + 1 + i as i64, i + 1));
        }
        EnvironmentLaw::from_spec(LawSpec {
            m: self.m,
            background: (*self.background).clone(),
            generator: GeneratorSpec::Explicit {
                stacks,
                default: 0,
                sites,
            },
            truncation: None,
            seed,
        })
    }
}

impl TryFrom<InstanceSpec> for OracleInstance {
    type Error = Error;

    fn try_from(s: InstanceSpec) -> Result<Self> {
        Self::new(s.interval.0, s.interval.1, s.start, s.background, s.stacks)
    }
}

impl From<OracleInstance> for InstanceSpec {
    fn from(i: OracleInstance) -> Self {
        InstanceSpec {
            interval: (i.lower, i.upper),
            start: i.start,
            background: (*i.background).clone(),
            stacks: i.stacks.iter().map(|s| s.cookies().to_vec()).collect(),
        }
    }
}

/// Bijective indexing of the chain's states.
///
/// Transient state `(p, c)`, at position `lower + 1 + p` with consumed-count
/// vector `c` of base-`(M+1)` code `code`, has index `code * width + p`.
/// Absorbing states are the reachable exit positions, in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndex {
    pub lower: i64,
    pub upper: i64,
    pub width: usize,
    pub m: usize,
    pub configs: usize,
    pub exits: Vec<i64>,
    powers: Vec<usize>,
}

impl StateIndex {
    pub fn transient_count(&self) -> usize {
        self.width * self.configs
    }

    #[inline]
    pub fn index(&self, position: usize, config: usize) -> usize {
        config * self.width + position
    }

    /// Inverse of [`index`](Self::index): `(position offset, consumed counts)`.
    pub fn decode(&self, index: usize) -> (usize, Vec<usize>) {
        let position = index % self.width;
        let mut code = index / self.width;
        let mut counts = Vec::with_capacity(self.width);
        for _ in 0..self.width {
            counts.push(code % (self.m + 1));
            code /= self.m + 1;
        }
        (position, counts)
    }

    pub fn exit_slot(&self, position: i64) -> Option<usize> {
        self.exits.binary_search(&position).ok()
    }

    fn is_exit(&self, position: i64) -> bool {
        position <= self.lower || position >= self.upper
    }
}

/// Enumerates states, failing if `width (M+1)^width` exceeds `budget`.
pub fn enumerate_states(instance: &OracleInstance, budget: u64) -> Result<StateIndex> {
    let width = instance.width();
    let m = instance.m;
    let configs = (m as u128 + 1).checked_pow(width as u32);
    let count = configs.map(|c| c * width as u128);
    match count {
        Some(c) if c <= budget as u128 => {}
        _ => {
            return Err(Error::StateBudgetExceeded {
                count: count.unwrap_or(u128::MAX),
                budget,
            })
        }
    }
    let configs = configs.expect("checked") as usize;
    let mut exits = BTreeSet::new();
    for (i, stack) in instance.stacks.iter().enumerate() {
        let site = instance.lower + 1 + i as i64;
        let laws = stack.cookies().iter().chain(std::iter::once(stack.background()));
        for law in laws {
            for &(z, _) in law.atoms() {
                let t = site + z;
                if t <= instance.lower || t >= instance.upper {
                    exits.insert(t);
                }
            }
        }
    }
    let powers = (0..width).map(|i| (m + 1).pow(i as u32)).collect();
    Ok(StateIndex {
        lower: instance.lower,
        upper: instance.upper,
        width,
        m,
        configs,
        exits: exits.into_iter().collect(),
        powers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitAnalysis {
    /// Probability of leaving through the top, `τ_upper < σ_lower`.
    pub p_up: f64,
    /// Law of the exit position, overshoots included.
    pub exit_position_law: JumpDistribution,
    pub expected_exit_position: f64,
    pub expected_consumed_drift: f64,
    pub expected_exit_time: f64,
    /// `E[X_T] - start - E[D_T]`.
    pub optional_stopping_residual: f64,
    /// Largest relative residual of the linear systems over all states.
    pub solve_residual: f64,
    pub transient_states: u64,
}

pub fn solve_exit(instance: &OracleInstance) -> Result<ExitAnalysis> {
    solve_exit_with_budget(instance, DEFAULT_STATE_BUDGET)
}

pub fn solve_exit_with_budget(instance: &OracleInstance, budget: u64) -> Result<ExitAnalysis> {
    let index = enumerate_states(instance, budget)?;
    let values = solve_all(instance, &index)?;
    let cols = index.exits.len() + 2;
    let start = index.index((instance.start - instance.lower - 1) as usize, 0);
    let row = &values[start * cols..(start + 1) * cols];

    let mut exit_probs = Vec::with_capacity(index.exits.len());
    for (k, &pos) in index.exits.iter().enumerate() {
        let p = row[k];
        if p < -1e-12 {
            return Err(Error::SingularSystem(format!("negative exit probability {p} at {pos}")));
        }
        exit_probs.push((pos, p.max(0.0)));
    }
    let p_up = compensated_sum(exit_probs.iter().filter(|e| e.0 >= instance.upper).map(|e| e.1));
    let expected_exit_position = compensated_sum(exit_probs.iter().map(|&(z, p)| z as f64 * p));
    let expected_consumed_drift = row[cols - 2];
    let expected_exit_time = row[cols - 1];
    let exit_position_law = JumpDistribution::new(exit_probs.iter().copied().filter(|e| e.1 > 0.0))?;

    Ok(ExitAnalysis {
        p_up,
        exit_position_law,
        expected_exit_position,
        expected_consumed_drift,
        expected_exit_time,
        optional_stopping_residual: expected_exit_position - instance.start as f64 - expected_consumed_drift,
        solve_residual: residual(instance, &index, &values),
        transient_states: index.transient_count() as u64,
    })
}

/// The law used at a transient state and the configuration it moves to.
#[inline]
fn transition<'a>(
    instance: &'a OracleInstance,
    index: &StateIndex,
    position: usize,
    config: usize,
    counts: &[usize],
) -> (&'a JumpDistribution, usize) {
    let c = counts[position];
    let law = instance.stacks[position].law(c + 1);
    let next = if c < index.m { config + index.powers[position] } else { config };
    (law, next)
}

/// Adds `p * value(target)` into `acc`.
#[inline]
fn accumulate(index: &StateIndex, values: &[f64], cols: usize, site: i64, next: usize, p: f64, acc: &mut [f64]) {
    if index.is_exit(site) {
        acc[index.exit_slot(site).expect("enumerated exit")] += p;
    } else {
        let t = index.index((site - index.lower - 1) as usize, next);
        for (a, v) in acc.iter_mut().zip(&values[t * cols..(t + 1) * cols]) {
            *a += p * v;
        }
    }
}

fn solve_all(instance: &OracleInstance, index: &StateIndex) -> Result<Vec<f64>> {
    let cols = index.exits.len() + 2;
    let width = index.width;
    let mut values = vec![0.0; index.transient_count() * cols];
    let mut counts = vec![0usize; width];
    let mut acc = vec![0.0; cols];

    for config in (0..index.configs).rev() {
        let mut code = config;
        for c in counts.iter_mut() {
            *c = code % (index.m + 1);
            code /= index.m + 1;
        }
        // Sites with cookies left move to a strictly larger configuration.
        for pos in 0..width {
            if counts[pos] == index.m {
                continue;
            }
            let (law, next) = transition(instance, index, pos, config, &counts);
            let site = index.lower + 1 + pos as i64;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(z, p) in law.atoms() {
                accumulate(index, &values, cols, site + z, next, p, &mut acc);
            }
            acc[cols - 2] += law.mean();
            acc[cols - 1] += 1.0;
            let s = index.index(pos, config);
            values[s * cols..(s + 1) * cols].copy_from_slice(&acc);
        }
        // Exhausted sites couple to each other through the background law.
        let exhausted: Vec<usize> = (0..width).filter(|&p| counts[p] == index.m).collect();
        if exhausted.is_empty() {
            continue;
        }
        let e = exhausted.len();
        let mut slot = vec![usize::MAX; width];
        for (k, &p) in exhausted.iter().enumerate() {
            slot[p] = k;
        }
        let mu = instance.background();
        let mut a = DMatrix::<f64>::identity(e, e);
        let mut rhs = DMatrix::<f64>::zeros(e, cols);
        for (k, &pos) in exhausted.iter().enumerate() {
            let site = index.lower + 1 + pos as i64;
            acc.iter_mut().for_each(|v| *v = 0.0);
            for &(z, p) in mu.atoms() {
                let t = site + z;
                if !index.is_exit(t) && slot[(t - index.lower - 1) as usize] != usize::MAX {
                    a[(k, slot[(t - index.lower - 1) as usize])] -= p;
                } else {
                    accumulate(index, &values, cols, t, config, p, &mut acc);
                }
            }
            acc[cols - 2] += mu.mean();
            acc[cols - 1] += 1.0;
            for (j, v) in acc.iter().enumerate() {
                rhs[(k, j)] = *v;
            }
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem(format!("exhausted block of configuration {config}")))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(format!("non-finite solution in configuration {config}")));
        }
        for (k, &pos) in exhausted.iter().enumerate() {
            let s = index.index(pos, config);
            for j in 0..cols {
                values[s * cols + j] = sol[(k, j)];
            }
        }
    }
    Ok(values)
}

/// `max |v - Q v - b| / max(1, |v|_inf)` over every transient state and column.
fn residual(instance: &OracleInstance, index: &StateIndex, values: &[f64]) -> f64 {
    let cols = index.exits.len() + 2;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    let mut acc = vec![0.0; cols];
    for config in 0..index.configs {
        let (_, counts) = index.decode(index.index(0, config));
        for pos in 0..index.width {
            let (law, next) = transition(instance, index, pos, config, &counts);
            let site = index.lower + 1 + pos as i64;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(z, p) in law.atoms() {
                accumulate(index, values, cols, site + z, next, p, &mut acc);
            }
            acc[cols - 2] += law.mean();
            acc[cols - 1] += 1.0;
            let s = index.index(pos, config);
            for j in 0..cols {
                worst = worst.max((values[s * cols + j] - acc[j]).abs());
            }
        }
    }
    worst / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEntry {
    pub quantity: String,
    pub exact: f64,
    pub estimate: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub replicas: u64,
    pub horizon: u64,
    pub entries: Vec<ZEntry>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Pass threshold on every `|z|`.
pub const Z_LIMIT: f64 = 4.0;

#[derive(Debug, Default)]
struct ExitAcc {
    up: u64,
    drift: RunningStats,
    time: RunningStats,
    positions: BTreeMap<i64, u64>,
    undecided: u64,
}

impl Merge for ExitAcc {
    fn merge(&mut self, o: Self) {
        self.up += o.up;
        self.drift.merge(o.drift);
        self.time.merge(o.time);
        Merge::merge(&mut self.positions, o.positions);
        self.undecided += o.undecided;
    }
}

/// Compares Monte Carlo exits of the simulation engine against the exact solve.
pub fn cross_validate(instance: &OracleInstance, replicas: u64, seed: u64) -> Result<ValidationReport> {
    let exact = solve_exit(instance)?;
    let law = Arc::new(instance.to_law(seed)?);
    let horizon = ((exact.expected_exit_time * 1e4).ceil() as u64).max(1000);
    let (up, down) = (instance.upper, instance.lower);
    let acc = par_replicas(replicas, |r, acc: &mut ExitAcc| {
        let (mut state, mut env) = replica(&law, instance.start, r);
        let rec = first_passage(&mut state, &mut env, up, down, horizon);
        match rec.exit {
            Exit::Undecided => {
                acc.undecided += 1;
                return;
            }
            Exit::Up => acc.up += 1,
            Exit::Down => {}
        }
        acc.drift.push(rec.drift);
        acc.time.push(rec.time as f64);
        *acc.positions.entry(rec.position).or_default() += 1;
    });
    if acc.undecided > 0 {
        return Err(Error::Undecided(acc.undecided));
    }

    let n = replicas;
    let mut entries = vec![
        ZEntry {
            quantity: "p_up".into(),
            exact: exact.p_up,
            estimate: acc.up as f64 / n as f64,
            z: binomial_z(acc.up, n, exact.p_up),
        },
        ZEntry {
            quantity: "expected_consumed_drift".into(),
            exact: exact.expected_consumed_drift,
            estimate: acc.drift.mean(),
            z: acc.drift.estimate().z_score(exact.expected_consumed_drift),
        },
        ZEntry {
            quantity: "expected_exit_time".into(),
            exact: exact.expected_exit_time,
            estimate: acc.time.mean(),
            z: acc.time.estimate().z_score(exact.expected_exit_time),
        },
    ];
    let mut positions: BTreeSet<i64> = exact.exit_position_law.atoms().iter().map(|a| a.0).collect();
    positions.extend(acc.positions.keys().copied());
    for pos in positions {
        let q = exact.exit_position_law.prob(pos);
        let hits = acc.positions.get(&pos).copied().unwrap_or(0);
        entries.push(ZEntry {
            quantity: format!("exit_at[{pos}]"),
            exact: q,
            estimate: hits as f64 / n as f64,
            z: binomial_z(hits, n, q),
        });
    }
    let max_abs_z = entries.iter().fold(0.0f64, |m, e| m.max(e.z.abs()));
    Ok(ValidationReport {
        replicas,
        horizon,
        entries,
        max_abs_z,
        passed: max_abs_z <= Z_LIMIT,
    })
}

fn random_pmf(rng: &mut WalkRng, lo: i64, hi: i64) -> JumpDistribution {
    loop {
        let mut atoms = Vec::new();
        for z in lo..=hi {
            if rng.random_bool(0.7) {
                atoms.push((z, rng.random_range(0.05..1.0)));
            }
        }
        if atoms.is_empty() {
            continue;
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        return JumpDistribution::new(atoms.into_iter().map(|(z, p)| (z, p / total))).expect("normalized");
    }
}

/// A random instance with interval width at most `max_width`, at most
/// `max_m` cookies per site and jumps in `[-max_jump, max_jump]`. The
/// background is symmetric with mass on `±1`; cookies have non-negative drift.
pub fn random_instance(seed: u64, max_width: usize, max_m: usize, max_jump: i64) -> OracleInstance {
    let mut rng = WalkRng::seed_from_u64(seed);
    let width = rng.random_range(1..=max_width);
    let m = rng.random_range(1..=max_m);
    let mut bg = vec![(0i64, rng.random_range(0.0..0.5))];
    let w1 = rng.random_range(0.2..1.0);
    bg.push((1, w1));
    bg.push((-1, w1));
    for z in 2..=max_jump {
        if rng.random_bool(0.5) {
            let w = rng.random_range(0.0..0.5);
            bg.push((z, w));
            bg.push((-z, w));
        }
    }
    let total: f64 = bg.iter().map(|a| a.1).sum();
    let background = JumpDistribution::new(bg.into_iter().map(|(z, p)| (z, p / total))).expect("normalized");

    let stacks = (0..width)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let d = random_pmf(&mut rng, -max_jump, max_jump);
                    if d.mean() < 0.0 {
                        JumpDistribution::new(d.atoms().iter().map(|&(z, p)| (-z, p))).expect("reflected")
                    } else {
                        d
                    }
                })
                .collect()
        })
        .collect();
    let lower = rng.random_range(-3..=0);
    let upper = lower + width as i64 + 1;
    let start = rng.random_range(lower + 1..upper);
    OracleInstance::new(lower, upper, start, background, stacks).expect("consistent")
}

/// The fixed regression suite of `count` random instances.
pub fn regression_suite(count: usize, seed: u64) -> Vec<OracleInstance> {
    (0..count as u64)
        .map(|i| random_instance(seed.wrapping_add(i), 5, 2, 2))
        .collect()
}
