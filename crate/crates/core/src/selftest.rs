//! Quick runtime checks of the closed-form scalar identities and of the
//! characteristics integrator, printed by `brinkman selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::{flow_map, integrate_trajectory, VelocitySampler};
use crate::grid::{Grid, VectorField};
use crate::growth::{sigma_log_lipschitz, theta_alpha, theta_alpha_integral, GrowthLaw};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64) -> Check {
    Check {
        name,
        passed: worst <= limit,
        detail: format!("worst {worst:.3e}, limit {limit:.1e}"),
    }
}

/// Runs every check; randomized ones draw from `seed`.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let linear = GrowthLaw::linear(1.0, 1.0).expect("valid law");
    let cubic = GrowthLaw::cubic_perturbed(1.0, 1.0, 0.1).expect("valid law");
    let mut out = Vec::new();

    // slope of H stays in [0, 1)
    let mut worst = f64::NEG_INFINITY;
    for law in [&linear, &cubic] {
        let dw = 1e-3;
        for i in 0..1000 {
            let w = i as f64 * dw;
            let (a, b) = (law.h_inverse(w), law.h_inverse(w + dw));
            let slope = match (a, b) {
                (Ok(a), Ok(b)) => (b - a) / dw,
                _ => f64::INFINITY,
            };
            // distance outside [0, 1): positive means a violation
            worst = worst.max((-slope).max(slope - (1.0 - 1e-9)));
        }
    }
    out.push(check("H slope in [0,1)", worst.max(0.0), 0.0));

    // inverse identity
    let mut worst = 0.0_f64;
    for law in [&linear, &cubic] {
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let back = law.h_inverse(law.id_minus_g(u)).unwrap_or(f64::INFINITY);
            worst = worst.max((back - u).abs());
        }
    }
    out.push(check("H inverts Id - G", worst, 1e-10));

    // logistic solution against RK4
    let f = |w: f64| w * (1.0 - 2.0 * w);
    let mut worst = 0.0_f64;
    for xi in [0.0, 0.05, 0.3, 0.5, 0.9, 1.0] {
        let mut w = xi;
        let dt = 1e-3;
        for step in 1..=10_000 {
            let k1 = f(w);
            let k2 = f(w + 0.5 * dt * k1);
            let k3 = f(w + 0.5 * dt * k2);
            let k4 = f(w + dt * k3);
            w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if step % 1000 == 0 {
                worst = worst.max((w - linear.omega_exact(xi, step as f64 * dt)).abs());
            }
        }
    }
    out.push(check("omega matches RK4", worst, 1e-8));

    // reaction sandwich
    let mut failures = 0.0;
    for _ in 0..10_000 {
        let law = if rng.random_bool(0.5) { &linear } else { &cubic };
        let u = rng.random_range(0.0..=1.0);
        let w = rng.random_range(0.0..=1.0);
        if law.reaction_bounds_check(u, w).is_err() {
            failures += 1.0;
        }
    }
    out.push(check("reaction sandwich", failures, 0.0));

    // reaction semigroup
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let p0 = rng.random_range(0.0..=1.0);
        let w = rng.random_range(0.0..=1.0);
        let (a, b) = (rng.random_range(0.0..0.01), rng.random_range(0.0..0.01));
        let two = linear.exact_reaction_step(linear.exact_reaction_step(p0, w, 320.0, a), w, 320.0, b);
        worst = worst.max((two - linear.exact_reaction_step(p0, w, 320.0, a + b)).abs());
    }
    out.push(check("reaction semigroup", worst, 1e-10));

    // derivative bound of the penalization
    let mut worst = 0.0_f64;
    for i in 0..200 {
        let r = 0.01 + 0.3 * i as f64 / 200.0;
        for (n, explicit) in [(1.0, true), (0.5, true), (2.0, false), (4.0, false)] {
            let theta = |r: f64| {
                if explicit {
                    theta_alpha(n, 0.05, r)
                } else {
                    theta_alpha_integral(n, 0.05, r)
                }
                .unwrap_or(f64::NAN)
            };
            let d = 1e-6 * r;
            let deriv = (theta(r + d) - theta(r - d)) / (2.0 * d);
            let bound = theta(r) / sigma_log_lipschitz(n, r).unwrap_or(f64::NAN);
            let excess = (deriv.abs() - bound) / bound;
            worst = worst.max(if excess.is_nan() { f64::INFINITY } else { excess });
        }
    }
    out.push(check("theta_alpha derivative bound", worst.max(0.0), 1e-6));

    // characteristics: exact on constants, invertible on smooth fields
    let grid = Grid::new(2, 2.0 * std::f64::consts::PI, 64).expect("valid grid");
    let constant = VelocitySampler::frozen(VectorField::from_fn(grid, |_| [0.4, -0.3]), 0.0, 1.0)
        .expect("frames");
    let x = integrate_trajectory([1.0, 2.0], 0.0, 1.0, &constant).unwrap_or([f64::NAN; 2]);
    let err = (x[0] - 1.4).abs().max((x[1] - 1.7).abs());
    out.push(check("trajectory exact for constant V", if err.is_nan() { 1.0 } else { err }, 1e-12));

    let smooth = VectorField::from_fn(grid, |p| [0.3 * p[1].sin(), 0.2 * p[0].cos()]);
    let sampler = VelocitySampler::frozen(smooth, 0.0, 0.5).expect("frames");
    let worst = match flow_map(&grid, 0.0, 0.5, &sampler) {
        Ok(fwd) => (0..grid.len())
            .step_by(37)
            .map(|i| {
                let y = fwd.target(i);
                integrate_trajectory(y, 0.5, 0.0, &sampler)
                    .map(|z| grid.distance(z, grid.center(i)))
                    .unwrap_or(f64::INFINITY)
            })
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let h = grid.spacing();
    out.push(check("flow map forward-backward", worst, 10.0 * h * h));
    out
}

/// Fixed-width pass/fail table.
pub fn format_table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{:<34} {:<4} {}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run_selftest(1);
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(format_table(&checks).lines().count() == checks.len());
    }
}
