//! Recurrence and transience diagnostics.
//!
//! Every replica is run until it first drops below its start or the largest
//! horizon is reached. Return fractions at smaller horizons are read off the
//! same runs, so they are nested exactly. The escape estimate `β̂(h)` is the
//! fraction of replicas still at or above the start at horizon `h`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{delta, validate_assumptions, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, DOMAIN_GRID};
use crate::stats::{par_replicas, wilson_interval, Merge};
use crate::walk::{replica, WalkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Recurrent,
    TransientRight,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Recurrent => "Recurrent",
            Verdict::TransientRight => "TransientRight",
            Verdict::Undecided => "Undecided",
        })
    }
}

/// Thresholds and run sizes for [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Strictly increasing step horizons.
    pub horizons: Vec<u64>,
    pub replicas: u64,
    /// Normal quantile of the Wilson intervals.
    pub confidence_z: f64,
    /// Minimum return fraction at the largest horizon for `Recurrent`.
    pub return_threshold: f64,
    /// `Recurrent` also needs the upper confidence bound of `β̂` below this.
    pub recurrent_beta_upper: f64,
    /// `TransientRight` needs `β̂(h_K) / β̂(h_{K-1})` at least this.
    pub stability_ratio: f64,
    /// Replicas (lowest indices first) whose ladder is followed to the largest horizon.
    pub ladder_replicas: u64,
    /// `|δ - 1|` at or below this marks the critical case.
    pub boundary_band: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1_000, 10_000, 100_000],
            replicas: 10_000,
            confidence_z: 1.96,
            return_threshold: 0.999,
            recurrent_beta_upper: 0.01,
            stability_ratio: 0.95,
            ladder_replicas: 1_000,
            boundary_band: 0.1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[0] >= w[1]) || self.horizons[0] == 0 {
            return Err(Error::Config("horizons must be positive and strictly increasing".into()));
        }
        if self.confidence_z.is_nan() || self.confidence_z <= 0.0 {
            return Err(Error::Config("confidence_z must be positive".into()));
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> u64 {
        *self.horizons.last().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPoint {
    pub horizon: u64,
    /// Replicas that went below their start within the horizon.
    pub returned: u64,
    pub return_fraction: f64,
    pub beta_hat: f64,
    pub beta_ci_lo: f64,
    pub beta_ci_hi: f64,
}

/// Counts of completed ladder failures `J = #{j : B_j <= horizon}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LadderStatistics {
    pub replicas: u64,
    pub horizon: u64,
    /// `J -> replicas`.
    pub failures: BTreeMap<u32, u64>,
    /// Replicas that ended waiting for a new maximum after their last failure.
    pub pending: u64,
    /// Pooled ratio estimate of `β` from `P(B_j < ∞) = (1 - β)^j`.
    pub beta_from_ladder: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub replicas: u64,
    pub horizons: Vec<HorizonPoint>,
    pub ladder: LadderStatistics,
}

impl EscapeEstimate {
    pub fn top(&self) -> &HorizonPoint {
        self.horizons.last().expect("at least one horizon")
    }

    /// Replicas that had not returned by the largest horizon.
    pub fn censored(&self) -> u64 {
        self.replicas - self.top().returned
    }
}

/// First time strictly below the start, and the ladder failure count.
struct ReplicaRun {
    first_return: Option<u64>,
    failures: u32,
    pending: bool,
}

fn run_replica(state: &mut WalkState, env: &mut crate::env::RealizedEnvironment, horizon: u64, ladder: bool) -> ReplicaRun {
    let start = state.start();
    let mut first_return = None;
    let mut failures = 0u32;
    // Level the walk must drop below (seeking B_j) or climb above (seeking N_j).
    let mut threshold = start;
    let mut seeking_drop = true;
    let mut running_max = start;
    while state.steps() < horizon {
        state.step(env);
        let x = state.position();
        if seeking_drop {
            if x < threshold {
                failures += 1;
                if first_return.is_none() {
                    first_return = Some(state.steps());
                    if !ladder {
                        break;
                    }
                }
                seeking_drop = false;
                threshold = running_max;
            }
        } else if x > threshold {
            seeking_drop = true;
            threshold = x;
        }
        running_max = running_max.max(x);
    }
    ReplicaRun {
        first_return,
        failures,
        pending: ladder && !seeking_drop,
    }
}

#[derive(Debug, Default)]
struct EscapeAcc {
    returns: Vec<u64>,
    failures: BTreeMap<u32, u64>,
    pending: u64,
}

impl Merge for EscapeAcc {
    fn merge(&mut self, o: Self) {
        self.returns.merge(o.returns);
        Merge::merge(&mut self.failures, o.failures);
        self.pending += o.pending;
    }
}

/// `β̂` with Wilson intervals at every horizon, and ladder statistics over
/// the first `ladder_replicas` replicas.
pub fn estimate_escape_probability(
    law: &Arc<EnvironmentLaw>,
    horizons: &[u64],
    replicas: u64,
    confidence_z: f64,
    ladder_replicas: u64,
) -> EscapeEstimate {
    let max_h = *horizons.last().expect("at least one horizon");
    let acc = par_replicas(replicas, |r, acc: &mut EscapeAcc| {
        if acc.returns.is_empty() {
            acc.returns = vec![0; horizons.len()];
        }
        let (mut state, mut env) = replica(law, 0, r);
        let ladder = r < ladder_replicas;
        let run = run_replica(&mut state, &mut env, max_h, ladder);
        if let Some(t) = run.first_return {
            for (count, &h) in acc.returns.iter_mut().zip(horizons) {
                if t <= h {
                    *count += 1;
                }
            }
        }
        if ladder {
            *acc.failures.entry(run.failures).or_default() += 1;
            acc.pending += run.pending as u64;
        }
    });

    let points = horizons
        .iter()
        .zip(&acc.returns)
        .map(|(&horizon, &returned)| {
            let escaped = replicas - returned;
            let (lo, hi) = wilson_interval(escaped, replicas, confidence_z);
            HorizonPoint {
                horizon,
                returned,
                return_fraction: returned as f64 / replicas as f64,
                beta_hat: escaped as f64 / replicas as f64,
                beta_ci_lo: lo,
                beta_ci_hi: hi,
            }
        })
        .collect();

    let ladder_count = ladder_replicas.min(replicas);
    let at_least = |j: u32| acc.failures.range(j..).map(|e| *e.1).sum::<u64>();
    let max_j = acc.failures.keys().next_back().copied().unwrap_or(0);
    let (num, den) = (1..=max_j).fold((0u64, 0u64), |(n, d), j| (n + at_least(j), d + at_least(j - 1)));
    let ladder = LadderStatistics {
        replicas: ladder_count,
        horizon: max_h,
        beta_from_ladder: (den > 0).then(|| 1.0 - num as f64 / den as f64),
        failures: acc.failures,
        pending: acc.pending,
    };
    EscapeEstimate {
        replicas,
        horizons: points,
        ladder,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub verdict: Verdict,
    pub delta: f64,
    /// What the phase transition at `δ = 1` predicts for this `δ`.
    pub predicted: Verdict,
    /// `δ` lies within the boundary band around 1.
    pub boundary: bool,
    /// `β̂(h_K) / β̂(h_{K-1})`, when defined.
    pub stability: Option<f64>,
    pub escape: EscapeEstimate,
}

impl ClassificationResult {
    pub fn return_fractions(&self) -> Vec<(u64, f64)> {
        self.escape.horizons.iter().map(|p| (p.horizon, p.return_fraction)).collect()
    }
}

impl fmt::Display for ClassificationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let top = self.escape.top();
        writeln!(f, "delta = {}", self.delta)?;
        writeln!(
            f,
            "verdict: {}{}  (theorem predicts {})",
            self.verdict,
            if self.boundary { " [boundary]" } else { "" },
            self.predicted
        )?;
        writeln!(
            f,
            "beta_hat = {:.5}  CI [{:.5}, {:.5}] at horizon {}",
            top.beta_hat, top.beta_ci_lo, top.beta_ci_hi, top.horizon
        )?;
        for p in &self.escape.horizons {
            writeln!(f, "  return fraction at {:>10}: {:.5}", p.horizon, p.return_fraction)?;
        }
        match self.stability {
            Some(s) => writeln!(f, "stability ratio: {s:.4}"),
            None => writeln!(f, "stability ratio: undefined"),
        }
    }
}

pub fn predicted_verdict(delta: f64) -> Verdict {
    if delta > 1.0 {
        Verdict::TransientRight
    } else {
        Verdict::Recurrent
    }
}

/// Verdict from an escape estimate under the thresholds of `config`.
pub fn verdict_of(escape: &EscapeEstimate, config: &ClassifierConfig) -> (Verdict, Option<f64>) {
    let hs = &escape.horizons;
    let top = escape.top();
    let stability = (hs.len() >= 2 && hs[hs.len() - 2].beta_hat > 0.0)
        .then(|| top.beta_hat / hs[hs.len() - 2].beta_hat);
    let transient = hs.len() >= 2
        && hs[hs.len() - 2..].iter().all(|p| p.beta_ci_lo > 0.0)
        && stability.is_some_and(|s| s >= config.stability_ratio);
    let recurrent = top.return_fraction >= config.return_threshold && top.beta_ci_hi < config.recurrent_beta_upper;
    let verdict = if transient {
        Verdict::TransientRight
    } else if recurrent {
        Verdict::Recurrent
    } else {
        Verdict::Undecided
    };
    (verdict, stability)
}

pub fn classify(law: &Arc<EnvironmentLaw>, config: &ClassifierConfig) -> Result<ClassificationResult> {
    config.validate()?;
    let escape = estimate_escape_probability(
        law,
        &config.horizons,
        config.replicas,
        config.confidence_z,
        config.ladder_replicas,
    );
    let (verdict, stability) = verdict_of(&escape, config);
    let d = delta(law);
    Ok(ClassificationResult {
        verdict,
        delta: d,
        predicted: predicted_verdict(d),
        boundary: (d - 1.0).abs() <= config.boundary_band,
        stability,
        escape,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepOutcome {
    Classified(ClassificationResult),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub delta: Option<f64>,
    pub outcome: SweepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub horizons: Vec<u64>,
    pub rows: Vec<SweepRow>,
    /// Whether `β̂` at the largest horizon is non-decreasing in `δ` over the
    /// classified points. Diagnostic only.
    pub beta_monotone_in_delta: bool,
}

/// Classifies every grid point of `family`. Grid point `i` gets the law
/// seed `derive_seed(seed, GRID, i)`.
///
/// Points failing their assumption checks are skipped with the reason when
/// `skip_invalid` is set; otherwise the sweep stops before any simulation.
pub fn delta_sweep(
    family: impl Fn(f64, u64) -> Result<EnvironmentLaw>,
    grid: &[f64],
    config: &ClassifierConfig,
    seed: u64,
    skip_invalid: bool,
) -> Result<SweepTable> {
    config.validate()?;
    let mut laws = Vec::with_capacity(grid.len());
    for (i, &theta) in grid.iter().enumerate() {
        let law = family(theta, derive_seed(seed, DOMAIN_GRID, i as u64)).map_err(|e| e.to_string());
        let checked = law.and_then(|law| {
            let report = validate_assumptions(&law);
            if report.all_passed() {
                Ok(law)
            } else {
                Err(report.failures().join("; "))
            }
        });
        match checked {
            Ok(law) => laws.push(Ok(Arc::new(law))),
            Err(reason) if skip_invalid => laws.push(Err(reason)),
            Err(reason) => return Err(Error::AssumptionFailure(format!("parameter {theta}: {reason}"))),
        }
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (&parameter, law) in grid.iter().zip(laws) {
        rows.push(match law {
            Ok(law) => {
                let result = classify(&law, config)?;
                SweepRow {
                    parameter,
                    delta: Some(result.delta),
                    outcome: SweepOutcome::Classified(result),
                }
            }
            Err(reason) => SweepRow {
                parameter,
                delta: None,
                outcome: SweepOutcome::Skipped { reason },
            },
        });
    }
    let mut classified: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match &r.outcome {
            SweepOutcome::Classified(c) => Some((c.delta, c.escape.top().beta_hat)),
            SweepOutcome::Skipped { .. } => None,
        })
        .collect();
    classified.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SweepTable {
        horizons: config.horizons.clone(),
        beta_monotone_in_delta: classified.windows(2).all(|w| w[0].1 <= w[1].1),
        rows,
    })
}

impl SweepTable {
    /// `parameter,delta,beta_hat,beta_ci_lo,beta_ci_hi,return_frac_h1..hK,verdict,censored_count`.
    /// Skipped points leave the numeric fields empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["parameter", "delta", "beta_hat", "beta_ci_lo", "beta_ci_hi"]
            .map(String::from)
            .into();
        header.extend((1..=self.horizons.len()).map(|i| format!("return_frac_h{i}")));
        header.push("verdict".into());
        header.push("censored_count".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.parameter.to_string()];
            match &row.outcome {
                SweepOutcome::Classified(c) => {
                    let top = c.escape.top();
                    rec.push(c.delta.to_string());
                    rec.push(top.beta_hat.to_string());
                    rec.push(top.beta_ci_lo.to_string());
                    rec.push(top.beta_ci_hi.to_string());
                    rec.extend(c.escape.horizons.iter().map(|p| p.return_fraction.to_string()));
                    rec.push(c.verdict.to_string());
                    rec.push(c.escape.censored().to_string());
                }
                SweepOutcome::Skipped { .. } => {
                    rec.extend(std::iter::repeat_n(String::new(), 4 + self.horizons.len()));
                    rec.push("Skipped".into());
                    rec.push(String::new());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
