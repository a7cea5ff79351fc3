//! Ready-made laws used by the bundled experiments.

use crate::distributions::JumpDistribution;
use crate::env::{EnvironmentLaw, GeneratorSpec, LawSpec};
use crate::error::Result;

/// `P(W = up) = theta`, `P(W = down) = 1 - theta`.
pub fn two_point(theta: f64, up: i64, down: i64) -> Result<JumpDistribution> {
    JumpDistribution::new([(down, 1.0 - theta), (up, theta)])
}

/// One cookie per site stepping `+3` with probability `theta` and `-1`
/// otherwise, over the simple symmetric background. Its drift is `4 theta - 1`.
pub fn theta_family(theta: f64, seed: u64) -> Result<EnvironmentLaw> {
    first_visit_family(two_point(theta, 3, -1)?, seed)
}

/// The first visit to each site draws its step from `first`; every later
/// visit is a simple symmetric step.
pub fn first_visit_family(first: JumpDistribution, seed: u64) -> Result<EnvironmentLaw> {
    EnvironmentLaw::deterministic(JumpDistribution::simple_symmetric(), vec![first], seed)
}

/// The `theta = 0.75` member of [`theta_family`], with drift 2.
pub fn delta_two(seed: u64) -> EnvironmentLaw {
    theta_family(0.75, seed).expect("valid law")
}

/// Zero-drift environment in which the walk escapes to the left with positive
/// probability through ever longer rightward jumps it never takes: on the
/// first visit to `x <= -2` the step is `-1` with probability `1 - 1/x^2` and
/// `x^2 - 1` otherwise; all other steps are simple symmetric. Sites below
/// `-depth` get simple symmetric cookies.
pub fn left_escape_environment(depth: u64, seed: u64) -> Result<EnvironmentLaw> {
    let srw = JumpDistribution::simple_symmetric();
    let mut stacks = vec![vec![srw.clone()]];
    let mut sites = Vec::new();
    for k in 2..=depth as i64 {
        let x = -k;
        let p = 1.0 / (k * k) as f64;
        stacks.push(vec![JumpDistribution::new([(-1, 1.0 - p), (k * k - 1, p)])?]);
        sites.push((x, stacks.len() - 1));
    }
    EnvironmentLaw::from_spec(LawSpec {
        m: 1,
        background: srw,
        generator: GeneratorSpec::Explicit {
            stacks,
            default: 0,
            sites,
        },
        truncation: Some(depth),
        seed,
    })
}
