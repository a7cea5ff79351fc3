//! Step-by-step simulation with local times and the consumed-drift ledger.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentLaw, RealizedEnvironment};
use crate::error::Result;
use crate::seed::{replica_rng, WalkRng};
use crate::site_map::SiteMap;
use crate::stats::{par_replicas, Estimate, Merge, RunningStats};

/// Drift consumed so far: per site, in total, to the right of the origin,
/// and the martingale `X_n - D_n`.
#[derive(Debug, Clone, Default)]
pub struct DriftLedger {
    per_site: SiteMap<f64>,
    total: f64,
    total_right: f64,
    martingale: f64,
}

impl DriftLedger {
    #[inline]
    fn add(&mut self, site: i64, drift: f64) {
        *self.per_site.get_mut(site) += drift;
        self.total += drift;
        if site >= 0 {
            self.total_right += drift;
        }
    }

    pub fn at(&self, site: i64) -> f64 {
        self.per_site.get(site)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn total_right(&self) -> f64 {
        self.total_right
    }

    pub fn martingale(&self) -> f64 {
        self.martingale
    }

    pub fn per_site(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.per_site.iter()
    }
}

#[derive(Debug, Clone)]
pub struct WalkState {
    position: i64,
    start: i64,
    steps: u64,
    local_times: SiteMap<u32>,
    ledger: DriftLedger,
    min_seen: i64,
    max_seen: i64,
    rng: WalkRng,
}

/// What happened on one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub from: i64,
    pub visit: u32,
    pub jump: i64,
    pub drift: f64,
}

impl WalkState {
    pub fn new(start: i64, rng: WalkRng) -> Self {
        let mut local_times = SiteMap::new();
        local_times.set(start, 1);
        Self {
            position: start,
            start,
            steps: 0,
            local_times,
            ledger: DriftLedger {
                martingale: start as f64,
                ..DriftLedger::default()
            },
            min_seen: start,
            max_seen: start,
            rng,
        }
    }

    pub fn position(&self) -> i64 {
        self.position
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Visits to `site` among `X_0..X_n`.
    pub fn local_time(&self, site: i64) -> u32 {
        self.local_times.get(site)
    }

    pub fn local_times(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.local_times.iter()
    }

    pub fn ledger(&self) -> &DriftLedger {
        &self.ledger
    }

    pub fn min_seen(&self) -> i64 {
        self.min_seen
    }

    pub fn max_seen(&self) -> i64 {
        self.max_seen
    }

    /// One step: eat the cookie for the current visit, jump, book its drift.
    #[inline]
    pub fn step(&mut self, env: &mut RealizedEnvironment) -> StepRecord {
        let from = self.position;
        let visit = self.local_times.get(from);
        let law = env.consume(from);
        let jump = law.sample(&mut self.rng);
        let drift = law.mean();
        self.ledger.add(from, drift);
        self.position += jump;
        self.steps += 1;
        *self.local_times.get_mut(self.position) += 1;
        self.min_seen = self.min_seen.min(self.position);
        self.max_seen = self.max_seen.max(self.position);
        self.ledger.martingale = self.position as f64 - self.ledger.total;
        StepRecord {
            from,
            visit,
            jump,
            drift,
        }
    }
}

/// A fresh walk and environment for one replica of a law.
pub fn replica(law: &Arc<EnvironmentLaw>, start: i64, replica: u64) -> (WalkState, RealizedEnvironment) {
    (
        WalkState::new(start, replica_rng(law.seed(), replica)),
        RealizedEnvironment::new(law.clone()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunOutcome {
    Stopped { steps: u64 },
    Undecided { steps: u64 },
}

impl RunOutcome {
    pub fn is_stopped(&self) -> bool {
        matches!(self, RunOutcome::Stopped { .. })
    }
}

/// Steps until `stop` holds (checked after every step) or `max_steps` steps
/// have been taken in this call.
pub fn run_until(
    state: &mut WalkState,
    env: &mut RealizedEnvironment,
    mut stop: impl FnMut(&WalkState) -> bool,
    max_steps: u64,
) -> RunOutcome {
    for taken in 1..=max_steps {
        state.step(env);
        if stop(state) {
            return RunOutcome::Stopped { steps: taken };
        }
    }
    RunOutcome::Undecided { steps: max_steps }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exit {
    Up,
    Down,
    Undecided,
}

/// First exit from the open interval `(down, up)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub exit: Exit,
    /// Position at exit, overshoot included.
    pub position: i64,
    pub time: u64,
    pub drift: f64,
    pub drift_right: f64,
}

/// Runs until the walk is `>= up` or `<= down`.
pub fn first_passage(
    state: &mut WalkState,
    env: &mut RealizedEnvironment,
    up: i64,
    down: i64,
    max_steps: u64,
) -> PassageRecord {
    assert!(
        down < state.position() && state.position() < up,
        "start {} must lie strictly inside ({down}, {up})",
        state.position()
    );
    let outcome = run_until(state, env, |s| s.position >= up || s.position <= down, max_steps);
    let exit = match outcome {
        RunOutcome::Undecided { .. } => Exit::Undecided,
        RunOutcome::Stopped { .. } if state.position >= up => Exit::Up,
        RunOutcome::Stopped { .. } => Exit::Down,
    };
    PassageRecord {
        exit,
        position: state.position,
        time: state.steps,
        drift: state.ledger.total,
        drift_right: state.ledger.total_right,
    }
}

#[derive(Debug, Clone, Default)]
struct StoppingAcc {
    exit: RunningStats,
    drift: RunningStats,
    diff: RunningStats,
    undecided: u64,
}

impl Merge for StoppingAcc {
    fn merge(&mut self, o: Self) {
        self.exit.merge(o.exit);
        self.drift.merge(o.drift);
        self.diff.merge(o.diff);
        self.undecided += o.undecided;
    }
}

/// Empirical check of `E[X_T] = y + E[D_T]` at the exit time of `(down, up)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingCheck {
    pub replicas: u64,
    pub undecided: u64,
    pub mean_exit_position: Estimate,
    pub mean_consumed_drift: Estimate,
    /// Per-replica `X_T - y - D_T`.
    pub difference: Estimate,
    pub z_score: f64,
}

pub fn optional_stopping_check(
    law: &Arc<EnvironmentLaw>,
    start: i64,
    up: i64,
    down: i64,
    replicas: u64,
    max_steps: u64,
) -> StoppingCheck {
    let acc = par_replicas(replicas, |r, acc: &mut StoppingAcc| {
        let (mut state, mut env) = replica(law, start, r);
        let rec = first_passage(&mut state, &mut env, up, down, max_steps);
        if rec.exit == Exit::Undecided {
            acc.undecided += 1;
            return;
        }
        acc.exit.push(rec.position as f64);
        acc.drift.push(rec.drift);
        acc.diff.push(rec.position as f64 - start as f64 - rec.drift);
    });
    let difference = acc.diff.estimate();
    StoppingCheck {
        replicas,
        undecided: acc.undecided,
        mean_exit_position: acc.exit.estimate(),
        mean_consumed_drift: acc.drift.estimate(),
        difference,
        z_score: difference.z_score(0.0),
    }
}

/// Survival function `P(T > n)` of the exit time of `(down, up)` at the
/// given checkpoints, estimated over replicas, plus the count of replicas
/// still inside at `max_steps`.
pub fn exit_time_survival(
    law: &Arc<EnvironmentLaw>,
    start: i64,
    up: i64,
    down: i64,
    replicas: u64,
    checkpoints: &[u64],
    max_steps: u64,
) -> (Vec<(u64, f64)>, u64) {
    let counts = par_replicas(replicas, |r, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; checkpoints.len() + 1];
        }
        let (mut state, mut env) = replica(law, start, r);
        let rec = first_passage(&mut state, &mut env, up, down, max_steps);
        for (i, &n) in checkpoints.iter().enumerate() {
            if rec.exit == Exit::Undecided || rec.time > n {
                acc[i] += 1;
            }
        }
        if rec.exit == Exit::Undecided {
            acc[checkpoints.len()] += 1;
        }
    });
    let survival = checkpoints
        .iter()
        .zip(&counts)
        .map(|(&n, &c)| (n, c as f64 / replicas as f64))
        .collect();
    (survival, counts[checkpoints.len()])
}

/// Writes `step,position,visit_index,consumed_drift` rows for `steps` steps.
pub fn write_trajectory<W: Write>(
    state: &mut WalkState,
    env: &mut RealizedEnvironment,
    steps: u64,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "position", "visit_index", "consumed_drift"])?;
    w.write_record([
        state.steps.to_string(),
        state.position.to_string(),
        state.local_time(state.position).to_string(),
        "0".to_string(),
    ])?;
    for _ in 0..steps {
        let rec = state.step(env);
        w.write_record([
            state.steps.to_string(),
            state.position.to_string(),
            rec.visit.to_string(),
            rec.drift.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
