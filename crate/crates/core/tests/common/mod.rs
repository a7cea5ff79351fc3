//! Property checks shared by the property test target and the acceptance run.
//! Each returns a description of the first violation found.

#![allow(dead_code)]

use std::sync::Arc;

use cookie_walk::classifier::estimate_escape_probability;
use cookie_walk::env::{GeneratorSpec, LawSpec};
use cookie_walk::presets::{delta_two, theta_family, two_point};
use cookie_walk::stats::ols_slope;
use cookie_walk::walk::{exit_time_survival, replica};
use cookie_walk::{EnvironmentLaw, JumpDistribution, RealizedEnvironment};

pub type Check = Result<String, String>;
pub type NamedCheck = (&'static str, fn() -> Check);

fn d(atoms: &[(i64, f64)]) -> JumpDistribution {
    JumpDistribution::new(atoms.iter().copied()).unwrap()
}

/// Two cookies per site drawn from a three-stack mixture with jumps up to 2.
pub fn mixture_law(seed: u64) -> EnvironmentLaw {
    EnvironmentLaw::from_spec(LawSpec {
        m: 2,
        background: d(&[(-2, 0.2), (-1, 0.3), (1, 0.3), (2, 0.2)]),
        generator: GeneratorSpec::Mixture {
            stacks: vec![
                vec![d(&[(-1, 0.3), (2, 0.7)]), d(&[(1, 1.0)])],
                vec![d(&[(-1, 0.5), (1, 0.5)]), d(&[(-2, 0.4), (2, 0.6)])],
                vec![d(&[(0, 0.5), (1, 0.5)]), d(&[(-1, 0.5), (1, 0.5)])],
            ],
            weights: vec![0.5, 0.3, 0.2],
        },
        truncation: None,
        seed,
    })
    .unwrap()
}

fn sample_laws() -> Vec<Arc<EnvironmentLaw>> {
    vec![
        Arc::new(delta_two(1)),
        Arc::new(theta_family(0.4, 2).unwrap()),
        Arc::new(mixture_law(3)),
    ]
}

/// `Σ_y L_n(y) = n + 1` after every step.
pub fn local_time_conservation() -> Check {
    let mut checked = 0u64;
    for law in sample_laws() {
        for r in 0..20 {
            let (mut s, mut env) = replica(&law, 0, r);
            for n in 1..=2000u64 {
                s.step(&mut env);
                let total: u64 = s.local_times().map(|(_, l)| l as u64).sum();
                if total != n + 1 {
                    return Err(format!("replica {r}: sum of local times {total} after {n} steps"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} walk states"))
}

/// Per-site drifts add up to the total and to the right-half total, and
/// `X_n - D_n` is the booked martingale.
pub fn ledger_additivity() -> Check {
    let mut checked = 0u64;
    for law in sample_laws() {
        for r in 0..20 {
            let (mut s, mut env) = replica(&law, 0, r);
            let mut booked = 0.0;
            for n in 1..=1000u64 {
                let rec = s.step(&mut env);
                booked += rec.drift;
                if n % 50 != 0 {
                    continue;
                }
                let ledger = s.ledger();
                let sum: f64 = ledger.per_site().map(|(_, v)| v).sum();
                let right: f64 = ledger.per_site().filter(|(x, _)| *x >= 0).map(|(_, v)| v).sum();
                let tol = 1e-9 * (1.0 + booked.abs());
                if (sum - ledger.total()).abs() > tol || (booked - ledger.total()).abs() > tol {
                    return Err(format!("replica {r} step {n}: per-site sum {sum} vs total {}", ledger.total()));
                }
                if (right - ledger.total_right()).abs() > tol {
                    return Err(format!("replica {r} step {n}: right sum {right} vs {}", ledger.total_right()));
                }
                let m = s.position() as f64 - ledger.total();
                if (m - ledger.martingale()).abs() > tol {
                    return Err(format!("replica {r} step {n}: martingale {} vs {m}", ledger.martingale()));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} ledger snapshots"))
}

/// Return fractions never decrease and `β̂` never increases along nested horizons.
pub fn horizon_monotonicity() -> Check {
    let horizons = [10, 30, 100, 300, 1000, 3000];
    for law in sample_laws() {
        let est = estimate_escape_probability(&law, &horizons, 2000, 1.96, 100);
        for w in est.horizons.windows(2) {
            if w[1].return_fraction < w[0].return_fraction || w[1].beta_hat > w[0].beta_hat {
                return Err(format!("{:?} then {:?}", w[0], w[1]));
            }
        }
        if est.horizons.iter().any(|p| !(0.0..=1.0).contains(&p.beta_hat)) {
            return Err("beta_hat outside [0, 1]".into());
        }
    }
    Ok(format!("{} laws x {} horizons", 3, horizons.len()))
}

fn observably_equal(a: &mut RealizedEnvironment, b: &mut RealizedEnvironment, sites: std::ops::RangeInclusive<i64>, m: usize) -> bool {
    sites.into_iter().all(|x| (1..=m + 1).all(|v| a.next_step_law(x, v) == b.next_step_law(x, v)))
}

/// `α(α(e, ℓ₁), ℓ₂) = α(e, min(ℓ₁ + ℓ₂, M))` site by site, and the reduced
/// environment never offers a cookie the original already passed.
pub fn alpha_composition() -> Check {
    let law = Arc::new(mixture_law(11));
    let m = law.m();
    let mut cases = 0;
    for r in 0..30u64 {
        let (mut s, mut e) = replica(&law, 0, r);
        for _ in 0..(r * 7) {
            s.step(&mut e);
        }
        let l1: Vec<(i64, u32)> = (-6..=6).map(|x| (x, ((x + r as i64).rem_euclid(3)) as u32)).collect();
        let l2: Vec<(i64, u32)> = (-6..=6).map(|x| (x, ((x * x + r as i64) % 3) as u32)).collect();
        let mut twice = e.remove_cookies(l1.iter().copied()).remove_cookies(l2.iter().copied());
        let mut once = e.remove_cookies(
            l1.iter()
                .zip(&l2)
                .map(|(&(x, a), &(_, b))| (x, (a + b).min(m as u32))),
        );
        if !observably_equal(&mut twice, &mut once, -8..=8, m) {
            return Err(format!("replica {r}: composition differs"));
        }
        for x in -8..=8 {
            let consumed_before = e.consumed(x);
            if twice.consumed(x) < consumed_before {
                return Err(format!("replica {r}: site {x} regained cookies"));
            }
        }
        cases += 1;
    }
    Ok(format!("{cases} environments"))
}

/// The stack at a site depends on the seed and the site only, never on the
/// order in which sites are realized.
pub fn realization_determinism() -> Check {
    let law = Arc::new(mixture_law(99));
    let mut forward = RealizedEnvironment::new(law.clone());
    let mut backward = RealizedEnvironment::new(law.clone());
    let sites: Vec<i64> = (-500..=500).collect();
    let a: Vec<_> = sites.iter().map(|&x| forward.realize_site(x).clone()).collect();
    let b: Vec<_> = sites.iter().rev().map(|&x| backward.realize_site(x).clone()).collect();
    if a.iter().ne(b.iter().rev()) {
        return Err("realization depends on visiting order".into());
    }
    let again: Vec<_> = sites.iter().map(|&x| forward.realize_site(x).clone()).collect();
    if a != again {
        return Err("repeated realization differs".into());
    }
    let other = Arc::new(law.with_seed(100));
    let mut env = RealizedEnvironment::new(other);
    let differs = sites.iter().zip(&a).any(|(&x, s)| env.realize_site(x) != s);
    if !differs {
        return Err("a different seed realized the same environment".into());
    }
    let (mut s1, mut e1) = replica(&law, 0, 5);
    let (mut s2, mut e2) = replica(&law, 0, 5);
    for _ in 0..5000 {
        if s1.step(&mut e1) != s2.step(&mut e2) {
            return Err("replica trajectories differ".into());
        }
    }
    Ok(format!("{} sites, 5000 steps", sites.len()))
}

/// Once the cookies inside `(-3, 3)` are gone the walk is simple symmetric
/// on five sites, so `ln P(T > n)` has slope `ln cos(π/6)`.
pub fn geometric_exit_tail() -> Check {
    let law = Arc::new(EnvironmentLaw::deterministic(
        JumpDistribution::simple_symmetric(),
        vec![two_point(0.75, 3, -1).unwrap()],
        21,
    )
    .unwrap());
    let checkpoints: Vec<u64> = (10..=40).step_by(2).collect();
    let (survival, undecided) = exit_time_survival(&law, 0, 3, -3, 400_000, &checkpoints, 100_000);
    if undecided > 0 {
        return Err(format!("{undecided} replicas never exited"));
    }
    let points: Vec<(f64, f64)> = survival.iter().map(|&(n, s)| (n as f64, s.ln())).collect();
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err("empty survival bin".into());
    }
    let slope = ols_slope(&points);
    let exact = (std::f64::consts::PI / 6.0).cos().ln();
    if (slope - exact).abs() > 0.01 {
        return Err(format!("fitted slope {slope:.5}, expected {exact:.5}"));
    }
    Ok(format!("fitted slope {slope:.5} vs {exact:.5}"))
}

pub fn all() -> Vec<NamedCheck> {
    vec![
        ("local-time conservation", local_time_conservation as fn() -> Check),
        ("ledger additivity", ledger_additivity),
        ("horizon monotonicity", horizon_monotonicity),
        ("alpha composition", alpha_composition),
        ("per-site realization determinism", realization_determinism),
        ("geometric exit-time tail", geometric_exit_tail),
    ]
}
