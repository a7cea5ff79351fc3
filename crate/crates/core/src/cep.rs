//! The environment seen from the running maximum.
//!
//! For a walk started at the origin, `τ_n` is the first time the walk is at
//! or beyond level `n`. At each such time the tracker records the overshoot
//! `X_{τ_n} - n`, the drift consumed on the non-negative half-line and the
//! drift consumed at sites a fixed lag behind the frontier. Long-run averages
//! of these along the frontier stand in for expectations under the
//! stationary law of the process.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentLaw, RealizedEnvironment};
use crate::error::Result;
use crate::stats::{par_replicas, Estimate, Merge, RunningStats};
use crate::walk::{replica, run_until, RunOutcome, WalkState};

/// Fraction of censored observations above which an estimate is flagged.
pub const CENSORING_LIMIT: f64 = 0.01;

/// Finite window of the environment around frontier level `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepState {
    pub level: i64,
    /// `τ_level`.
    pub time: u64,
    /// `X_{τ_level} - level`.
    pub overshoot: i64,
    /// Site of the first window entry, `level - w_left`.
    pub window_start: i64,
    /// Cookies eaten at each window site.
    pub consumed: Vec<u32>,
    /// Stack index of each window site.
    pub stacks: Vec<usize>,
}

impl CepState {
    pub fn consumed_at(&self, site: i64) -> Option<u32> {
        let off = site - self.window_start;
        (off >= 0).then(|| self.consumed.get(off as usize).copied()).flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Reached(CepState),
    /// The step budget ran out first.
    Censored { steps: u64 },
}

/// Runs the walk until it is at or beyond `level` and snapshots the window
/// `[level - w_left, level + w_right]`. If the walk already stands beyond
/// `level` no step is taken.
pub fn advance_frontier(
    state: &mut WalkState,
    env: &mut RealizedEnvironment,
    level: i64,
    window: (i64, i64),
    max_steps: u64,
) -> Advance {
    if state.position() < level {
        if let RunOutcome::Undecided { steps } = run_until(state, env, |s| s.position() >= level, max_steps) {
            return Advance::Censored { steps };
        }
    }
    let (w_left, w_right) = window;
    let sites = level - w_left..=level + w_right;
    Advance::Reached(CepState {
        level,
        time: state.steps(),
        overshoot: state.position() - level,
        window_start: level - w_left,
        consumed: sites.clone().map(|x| env.consumed(x)).collect(),
        stacks: sites.map(|x| env.law().stack_index(x)).collect(),
    })
}

/// Default left window width: twice the largest jump.
pub fn default_window(law: &EnvironmentLaw) -> (i64, i64) {
    let b = law.max_jump_bound() as i64;
    (2 * b, b)
}

/// One frontier observation of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub level: i64,
    pub time: u64,
    pub overshoot: i64,
    /// `D_{τ_level}⁺`.
    pub drift_right: f64,
    /// `D_{τ_level}^{level - lag}`.
    pub lagged_drift: f64,
}

/// Walks one replica from the origin through levels `1..=n`, calling `visit`
/// at each `τ_level`. Returns the number of levels not reached within
/// `max_steps` total steps.
pub fn frontier_walk(
    law: &Arc<EnvironmentLaw>,
    replica_index: u64,
    n: i64,
    lag: i64,
    max_steps: u64,
    mut visit: impl FnMut(FrontierPoint),
) -> u64 {
    frontier_walk_multi(law, replica_index, n, &[lag], max_steps, &mut Vec::new(), |p, _| visit(p))
}

/// An estimate over replicas plus its censoring bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredEstimate {
    pub estimate: Estimate,
    pub observations: u64,
    pub censored: u64,
    /// Censored share above [`CENSORING_LIMIT`].
    pub flagged: bool,
}

impl CensoredEstimate {
    fn new(stats: RunningStats, observations: u64, censored: u64) -> Self {
        let total = observations + censored;
        Self {
            estimate: stats.estimate(),
            observations,
            censored,
            flagged: total > 0 && censored as f64 > CENSORING_LIMIT * total as f64,
        }
    }
}

#[derive(Debug, Default)]
struct LagAcc {
    replica_means: RunningStats,
    observations: u64,
    censored: u64,
}

impl Merge for LagAcc {
    fn merge(&mut self, o: Self) {
        self.replica_means.merge(o.replica_means);
        self.observations += o.observations;
        self.censored += o.censored;
    }
}

/// Mean of `D_{τ_{m+k}}^m` over frontier sites `m ∈ [n/2, n-k]`, averaged
/// first within each replica and then across replicas. The standard error
/// is that of the replica means.
pub fn estimate_consumed_drift_at_origin(
    law: &Arc<EnvironmentLaw>,
    n: i64,
    k: i64,
    replicas: u64,
    max_steps: u64,
) -> CensoredEstimate {
    assert!(k >= 0 && n / 2 + k <= n, "lag {k} too large for frontier {n}");
    let first = n / 2 + k;
    let acc = par_replicas(replicas, |r, acc: &mut LagAcc| {
        let mut own = RunningStats::default();
        let missing = frontier_walk(law, r, n, k, max_steps, |p| {
            if p.level >= first {
                own.push(p.lagged_drift);
            }
        });
        acc.observations += own.count;
        acc.censored += missing.min((n - first + 1) as u64);
        if own.count > 0 {
            acc.replica_means.push(own.mean());
        }
    });
    CensoredEstimate::new(acc.replica_means, acc.observations, acc.censored)
}

#[derive(Debug, Default)]
struct RateAcc {
    rate: RunningStats,
    censored: u64,
}

impl Merge for RateAcc {
    fn merge(&mut self, o: Self) {
        self.rate.merge(o.rate);
        self.censored += o.censored;
    }
}

/// Mean of `D_{τ_n}⁺ / n` over replicas.
pub fn right_drift_rate(law: &Arc<EnvironmentLaw>, n: i64, replicas: u64, max_steps: u64) -> CensoredEstimate {
    assert!(n >= 1);
    let acc = par_replicas(replicas, |r, acc: &mut RateAcc| {
        let mut last = None;
        frontier_walk(law, r, n, 0, max_steps, |p| {
            if p.level == n {
                last = Some(p.drift_right);
            }
        });
        match last {
            Some(d) => acc.rate.push(d / n as f64),
            None => acc.censored += 1,
        }
    });
    let count = acc.rate.count;
    CensoredEstimate::new(acc.rate, count, acc.censored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepStatistics {
    pub frontier: i64,
    pub replicas: u64,
    pub overshoot_histogram: BTreeMap<i64, u64>,
    /// `(k, estimate of D_{τ_{m+k}}^m)` for each requested lag.
    pub consumed_drift_at_origin: Vec<(i64, CensoredEstimate)>,
    pub right_drift_rate: CensoredEstimate,
    pub censored_levels: u64,
}

impl CepStatistics {
    pub fn frontier_observations(&self) -> u64 {
        self.overshoot_histogram.values().sum()
    }
}

#[derive(Debug, Default)]
struct CepAcc {
    histogram: BTreeMap<i64, u64>,
    lagged: Vec<LagAcc>,
    rate: RateAcc,
    censored_levels: u64,
}

impl Merge for CepAcc {
    fn merge(&mut self, o: Self) {
        Merge::merge(&mut self.histogram, o.histogram);
        self.lagged.merge(o.lagged);
        self.rate.merge(o.rate);
        self.censored_levels += o.censored_levels;
    }
}

/// All frontier statistics from one pass per replica. Lagged drifts use the
/// sites `m ∈ [n/2, n-k]` for each lag `k`.
pub fn cep_statistics(law: &Arc<EnvironmentLaw>, n: i64, lags: &[i64], replicas: u64, max_steps: u64) -> CepStatistics {
    assert!(lags.iter().all(|&k| k >= 0 && n / 2 + k <= n));
    let acc = par_replicas(replicas, |r, acc: &mut CepAcc| {
        if acc.lagged.is_empty() {
            acc.lagged = lags.iter().map(|_| LagAcc::default()).collect();
        }
        let mut own = vec![RunningStats::default(); lags.len()];
        let mut last = None;
        let mut ledger_at = Vec::new();
        let missing = frontier_walk_multi(law, r, n, lags, max_steps, &mut ledger_at, |p, lagged| {
            *acc.histogram.entry(p.overshoot).or_default() += 1;
            for ((stats, &k), &d) in own.iter_mut().zip(lags).zip(lagged) {
                if p.level >= n / 2 + k {
                    stats.push(d);
                }
            }
            if p.level == n {
                last = Some(p.drift_right);
            }
        });
        acc.censored_levels += missing;
        for ((lag_acc, stats), &k) in acc.lagged.iter_mut().zip(own).zip(lags) {
            lag_acc.observations += stats.count;
            lag_acc.censored += missing.min((n - n / 2 - k + 1) as u64);
            if stats.count > 0 {
                lag_acc.replica_means.push(stats.mean());
            }
        }
        match last {
            Some(d) => acc.rate.rate.push(d / n as f64),
            None => acc.rate.censored += 1,
        }
    });
    let rate_count = acc.rate.rate.count;
    CepStatistics {
        frontier: n,
        replicas,
        overshoot_histogram: acc.histogram,
        consumed_drift_at_origin: lags
            .iter()
            .copied()
            .zip(acc.lagged)
            .map(|(k, a)| (k, CensoredEstimate::new(a.replica_means, a.observations, a.censored)))
            .collect(),
        right_drift_rate: CensoredEstimate::new(acc.rate.rate, rate_count, acc.rate.censored),
        censored_levels: acc.censored_levels,
    }
}

fn frontier_walk_multi(
    law: &Arc<EnvironmentLaw>,
    replica_index: u64,
    n: i64,
    lags: &[i64],
    max_steps: u64,
    scratch: &mut Vec<f64>,
    mut visit: impl FnMut(FrontierPoint, &[f64]),
) -> u64 {
    let (mut state, mut env) = replica(law, 0, replica_index);
    for level in 1..=n {
        if state.position() < level {
            let budget = max_steps - state.steps();
            if !run_until(&mut state, &mut env, |s| s.position() >= level, budget).is_stopped() {
                return (n - level + 1) as u64;
            }
        }
        let ledger = state.ledger();
        scratch.clear();
        scratch.extend(lags.iter().map(|&k| ledger.at(level - k)));
        let point = FrontierPoint {
            level,
            time: state.steps(),
            overshoot: state.position() - level,
            drift_right: ledger.total_right(),
            lagged_drift: scratch.first().copied().unwrap_or(0.0),
        };
        visit(point, scratch);
    }
    0
}

/// Writes one `replica,frontier_n,overshoot,D_plus,D_origin_lagged` row per
/// reached level of each replica. Replicas run sequentially in index order.
pub fn write_frontier_csv<W: Write>(
    law: &Arc<EnvironmentLaw>,
    n: i64,
    lag: i64,
    replicas: u64,
    max_steps: u64,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "frontier_n", "overshoot", "D_plus", "D_origin_lagged"])?;
    let mut err = None;
    for r in 0..replicas {
        frontier_walk(law, r, n, lag, max_steps, |p| {
            if err.is_some() {
                return;
            }
            let lagged = if p.level >= lag { p.lagged_drift.to_string() } else { String::new() };
            let row = [
                r.to_string(),
                p.level.to_string(),
                p.overshoot.to_string(),
                p.drift_right.to_string(),
                lagged,
            ];
            if let Err(e) = w.write_record(&row) {
                err = Some(e);
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
    }
    w.flush()?;
    Ok(())
}
