//! Excited random walks on the integers with bounded non-nearest-neighbor
//! jumps ("cookie walks").
//!
//! The crate provides a reproducible Monte Carlo engine for the walk, an
//! exact absorbing-chain solver for exits from finite intervals, estimators
//! for the cookie environment process seen from the running maximum, and
//! recurrence/transience diagnostics with parameter sweeps.

pub mod cep;
pub mod classifier;
pub mod config;
pub mod distributions;
pub mod env;
pub mod error;
pub mod oracle;
pub mod presets;
pub mod seed;
pub mod site_map;
pub mod stats;
pub mod walk;

pub use distributions::JumpDistribution;
pub use env::{
    delta, stack_drift, validate_assumptions, AssumptionReport, CookieStack, EnvironmentLaw,
    GeneratorSpec, LawSpec, RealizedEnvironment,
};
pub use error::{Error, Result};
pub use oracle::{cross_validate, solve_exit, ExitAnalysis, OracleInstance, ValidationReport};

pub use walk::{first_passage, run_until, DriftLedger, Exit, PassageRecord, RunOutcome, WalkState};

/// Version string embedded in every artifact.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
/// Bumped whenever a CSV or JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;
