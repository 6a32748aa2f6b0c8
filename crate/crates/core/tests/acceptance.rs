//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the table is always printed. Exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brinkman::elliptic::{empirical_log_lipschitz, velocity_from_potential, EllipticMethod, EllipticSolver};
use brinkman::flow::{flow_map, integrate_trajectory, transport_by_characteristics, VelocitySampler};
use brinkman::grid::{lp_norm, upwind_advect, Grid, Mask, ScalarField, VectorField};
use brinkman::growth::{sigma_log_lipschitz, theta_alpha, theta_alpha_integral, GrowthLaw};
use brinkman::harness::{
    convergence_sweep, exclusion_band, initial_layer_probe, monotonicity_violations, ConvergenceReport,
    SweepSetup,
};
use brinkman::klevel::{run_klevel, KLevelConfig};
use brinkman::limit::{interface_cells, run_limit, solve_w_infinity, LimitConfig};
use brinkman::patch::PatchShape;

struct Verdict {
    checks: Vec<(String, bool)>,
}

impl Verdict {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn check(&mut self, pass: bool, what: impl Into<String>) {
        self.checks.push((what.into(), pass));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    fn detail(&self) -> String {
        self.checks
            .iter()
            .map(|(w, p)| if *p { w.clone() } else { format!("FAILED {w}") })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn unit_law() -> GrowthLaw {
    GrowthLaw::linear(1.0, 1.0).unwrap()
}

fn ball(g: &Grid, radius: f64) -> PatchShape {
    let c = g.extent() / 2.0;
    PatchShape::Ball {
        center: [c, if g.dim() == 2 { c } else { 0.0 }],
        radius,
    }
}

fn rk4_logistic(xi: f64, t_end: f64, dt: f64, samples: &[f64]) -> Vec<f64> {
    // omega' = omega (alpha P_M - (1 + alpha) omega) with alpha = P_M = 1
    let f = |w: f64| w * (1.0 - 2.0 * w);
    let mut out = Vec::new();
    let mut w = xi;
    let mut t = 0.0;
    let mut next = 0;
    let steps = (t_end / dt).round() as usize;
    for step in 0..=steps {
        while next < samples.len() && (samples[next] - t).abs() < 0.5 * dt {
            out.push(w);
            next += 1;
        }
        if step == steps {
            break;
        }
        let k1 = f(w);
        let k2 = f(w + 0.5 * dt * k1);
        let k3 = f(w + 0.5 * dt * k2);
        let k4 = f(w + dt * k3);
        w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = (step + 1) as f64 * dt;
    }
    out
}

fn criterion_1(v: &mut Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // (i) slope of H
    let laws = [unit_law(), GrowthLaw::cubic_perturbed(1.0, 1.0, 0.1).unwrap()];
    let mut slope_range = (f64::INFINITY, f64::NEG_INFINITY);
    for law in &laws {
        let dw = 2e-3;
        for i in 0..1000 {
            let w = i as f64 * dw;
            let s = (law.h_inverse(w + dw).unwrap() - law.h_inverse(w).unwrap()) / dw;
            slope_range = (slope_range.0.min(s), slope_range.1.max(s));
        }
    }
    v.check(
        slope_range.0 >= 0.0 && slope_range.1 < 1.0,
        format!("H slope in [{:.4}, {:.4}]", slope_range.0, slope_range.1),
    );

    // (ii) closed-form logistic against RK4
    let law = unit_law();
    let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
    let mut worst = 0.0_f64;
    for j in 0..=20 {
        let xi = j as f64 / 20.0;
        let reference = rk4_logistic(xi, 10.0, 1e-4, &times);
        for (t, r) in times.iter().zip(&reference) {
            worst = worst.max((law.omega_exact(xi, *t) - r).abs());
        }
    }
    v.check(worst <= 1e-8, format!("omega vs RK4 {worst:.1e}"));

    // (iii) reaction sandwich, bounds recomputed here
    let mut bad = 0;
    for _ in 0..10_000 {
        let alpha = rng.random_range(0.1..3.0);
        let pm = rng.random_range(0.2..3.0);
        let law = if rng.random_bool(0.5) {
            GrowthLaw::linear(alpha, pm).unwrap()
        } else {
            GrowthLaw::cubic_perturbed(alpha, pm, rng.random_range(0.0..0.5)).unwrap()
        };
        let u = rng.random_range(0.0..=pm);
        let w = rng.random_range(0.0..=pm);
        let lower = u * (alpha * pm - (1.0 + alpha) * u);
        let value = u * (w - u + law.g(u));
        let upper = u * (pm + law.g(0.0));
        let tol = 1e-12 * (1.0 + upper);
        let ok = lower <= value + tol && value <= upper + tol && law.reaction_bounds_check(u, w).is_ok();
        if !ok {
            bad += 1;
        }
    }
    v.check(bad == 0, format!("sandwich failures {bad}/10000"));

    // (iv) derivative bound; the explicit form only satisfies it for N <= 1
    let mut worst = f64::NEG_INFINITY;
    for i in 0..200 {
        let r = 0.005 + 0.4 * i as f64 / 200.0;
        for (n, explicit) in [(0.5, true), (1.0, true), (1.0, false), (2.0, false), (5.0, false)] {
            let theta = |r: f64| {
                if explicit {
                    theta_alpha(n, 0.05, r).unwrap()
                } else {
                    theta_alpha_integral(n, 0.05, r).unwrap()
                }
            };
            let d = 1e-5 * r;
            let deriv = (theta(r + d) - theta(r - d)) / (2.0 * d);
            let bound = theta(r) / sigma_log_lipschitz(n, r).unwrap();
            worst = worst.max((deriv.abs() - bound) / bound);
        }
    }
    v.check(worst <= 1e-6, format!("theta bound excess {worst:.1e}"));
}

fn criterion_2(v: &mut Verdict) {
    let mut errors = Vec::new();
    for n in [32, 64, 128, 256] {
        let g = Grid::new(1, 2.0 * PI, n).unwrap();
        let p = ScalarField::from_fn(g, |x| x[0].cos());
        let (w, _) = EllipticSolver::default().solve(&p).unwrap();
        let err = w
            .values()
            .iter()
            .enumerate()
            .map(|(i, wi)| (wi - 0.5 * g.center(i)[0].cos()).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|e| e[0] / e[1]).collect();
    v.check(
        ratios.iter().all(|r| (3.0..=5.0).contains(r)),
        format!("cos error ratios {ratios:.3?}"),
    );

    let g = Grid::new(2, 4.0, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(1..4) as f64,
                rng.random_range(1..4) as f64,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let p = ScalarField::from_fn(g, |x| {
        modes
            .iter()
            .map(|(a, kx, ky, ph)| a * (2.0 * PI * (kx * x[0] + ky * x[1]) / 4.0 + ph).sin())
            .sum()
    });
    let (ws, _) = EllipticSolver::new(EllipticMethod::Spectral, 1.0, 1e-12).solve(&p).unwrap();
    let (wr, _) = EllipticSolver::new(EllipticMethod::Sor, 1.0, 1e-12).solve(&p).unwrap();
    let gap = lp_norm(&ws.combine(1.0, &wr, -1.0).unwrap(), f64::INFINITY, None).unwrap();
    v.check(gap <= 1e-8, format!("spectral vs SOR {gap:.1e}"));

    let mut bad = 0;
    for trial in 0..100 {
        let g = if trial % 2 == 0 {
            Grid::new(1, 8.0, 128).unwrap()
        } else {
            Grid::new(2, 8.0, 32).unwrap()
        };
        let values = (0..g.len()).map(|_| rng.random_range(0.0..=1.0)).collect();
        let p = ScalarField::new(g, values).unwrap();
        let (w, _) = EllipticSolver::default().solve(&p).unwrap();
        if w.min() < p.min() - 1e-12 || w.max() > p.max() + 1e-12 {
            bad += 1;
        }
    }
    v.check(bad == 0, format!("maximum principle failures {bad}/100"));
}

fn random_pairs(g: &Grid, count: usize, max_sep: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let h = g.spacing();
    let reach = (max_sep / h).floor() as i64;
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let i = rng.random_range(0..g.len());
        let dx = rng.random_range(-reach..=reach);
        let dy = rng.random_range(-reach..=reach);
        let sep = h * ((dx * dx + dy * dy) as f64).sqrt();
        if sep < h || sep > max_sep {
            continue;
        }
        let [ix, iy] = g.axes(i);
        pairs.push((i, g.flat(ix as isize + dx as isize, iy as isize + dy as isize)));
    }
    pairs
}

fn criterion_3(v: &mut Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // forward-backward on a smooth time-dependent field
    let l = 2.0 * PI;
    let g = Grid::new(2, l, 64).unwrap();
    let frames = (0..=4)
        .map(|j| {
            let t = 0.25 * j as f64;
            (t, VectorField::from_fn(g, |x| [0.4 * x[1].sin() * (1.0 + 0.5 * t), 0.3 * x[0].cos()]))
        })
        .collect();
    let sampler = VelocitySampler::new(frames).unwrap();
    let forward = flow_map(&g, 0.0, 1.0, &sampler).unwrap();
    let worst = (0..g.len())
        .map(|i| {
            let back = integrate_trajectory(forward.target(i), 1.0, 0.0, &sampler).unwrap();
            g.distance(back, g.center(i))
        })
        .fold(0.0, f64::max);
    let h = g.spacing();
    v.check(worst <= 10.0 * h * h, format!("inverse error {worst:.1e} vs {:.1e}", 10.0 * h * h));

    // Holder bound for the velocity of a tumor potential (log-Lipschitz)
    let g = Grid::new(2, 8.0, 128).unwrap();
    let h = g.spacing();
    let p = Mask::above(&ball(&g, 1.5).level_set(&g), 0.0).to_field();
    let (w, _) = EllipticSolver::default().solve(&p).unwrap();
    let vel = velocity_from_potential(&w);
    let n_hat = empirical_log_lipschitz(&vel, 400);
    let horizon = 1.0;
    let sampler = VelocitySampler::frozen(vel.clone(), 0.0, horizon).unwrap();
    let phi = flow_map(&g, 0.0, horizon, &sampler).unwrap();
    let pairs = random_pairs(&g, 1000, 0.25, &mut rng);
    let excess = phi.holder_excess(n_hat, &pairs);
    v.check(excess <= 4.0 * h, format!("Holder excess {excess:.2e} (N {n_hat:.3})"));

    // time shift: start times t1, t2, compare at the horizon
    let frames = (0..=4)
        .map(|j| {
            let t = 0.25 * j as f64;
            (t, vel.scaled(1.0 + 0.5 * t))
        })
        .collect();
    let sampler = VelocitySampler::new(frames).unwrap();
    let m = sampler.bound();
    let n_t = 1.5 * n_hat;
    let exponent = (-n_t * horizon).exp();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let i = rng.random_range(0..g.len());
        let t1 = rng.random_range(0.0..0.3);
        let t2 = rng.random_range(0.0..0.3);
        let a = integrate_trajectory(g.center(i), t1, horizon, &sampler).unwrap();
        let b = integrate_trajectory(g.center(i), t2, horizon, &sampler).unwrap();
        let bound = (m * (t1 - t2).abs()).powf(exponent);
        worst = worst.max(g.distance(a, b) - bound);
    }
    v.check(worst <= 4.0 * h, format!("time-shift excess {worst:.2e}"));

    // characteristics versus upwind marching
    let mut gaps = Vec::new();
    for n in [64, 128, 256, 512] {
        let g = Grid::new(1, 2.0 * PI, n).unwrap();
        let vel = VectorField::from_fn(g, |x| [0.5 + 0.25 * x[0].sin(), 0.0]);
        let u0 = ScalarField::from_fn(g, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos());
        let t_end = 1.0;
        let exact = transport_by_characteristics(
            &u0,
            &VelocitySampler::frozen(vel.clone(), 0.0, t_end).unwrap(),
            t_end,
        )
        .unwrap();
        let steps = (t_end * 0.75 / (0.9 * g.spacing())).ceil() as usize;
        let dt = t_end / steps as f64;
        let back = vel.scaled(-1.0);
        let mut u = u0.clone();
        for _ in 0..steps {
            u = upwind_advect(&u, &back, dt).unwrap();
        }
        gaps.push(lp_norm(&u.combine(1.0, &exact, -1.0).unwrap(), 1.0, None).unwrap());
    }
    let ratios: Vec<f64> = gaps.windows(2).map(|e| e[0] / e[1]).collect();
    v.check(
        ratios.iter().all(|r| (1.6..=2.6).contains(r)),
        format!("cross-scheme ratios {ratios:.3?}"),
    );
}

fn criterion_4(v: &mut Verdict) {
    let solver = EllipticSolver::default();
    for alpha in [1.0, 2.0] {
        let law = GrowthLaw::linear(alpha, 1.0).unwrap();
        let g = Grid::new(2, 8.0, 64).unwrap();
        let mask = Mask::above(&ball(&g, 1.0).level_set(&g), 0.0);
        let (_, _, stats) = solve_w_infinity(&mask, &law, &solver, 1e-11, &ScalarField::zeros(g)).unwrap();
        let ratio = stats.max_ratio();
        let limit = 1.0 / (1.0 + alpha) + 0.05;
        v.check(ratio <= limit, format!("alpha {alpha}: sweep ratio {ratio:.3} <= {limit:.3}"));
    }

    let g = Grid::new(2, 4.0, 32).unwrap();
    let (w, _, _) =
        solve_w_infinity(&Mask::full(g), &unit_law(), &solver, 1e-13, &ScalarField::zeros(g)).unwrap();
    let err = w.values().iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    v.check(err <= 1e-10, format!("full torus error {err:.1e}"));

    let g = Grid::new(1, 8.0, 512).unwrap();
    let cfg = LimitConfig::new(g, unit_law(), ball(&g, 1.0), 0.5);
    let states = run_limit(cfg, &[0.0, 0.25, 0.5]).unwrap();
    let min_p = states
        .iter()
        .map(|s| s.region().indices().map(|i| s.p.get(i)).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    v.check(min_p >= 0.5 - 1e-9, format!("min limit pressure {min_p:.6}"));

    let mut measures = Vec::new();
    for n in [64, 128, 256] {
        let g = Grid::new(2, 8.0, n).unwrap();
        let cfg = LimitConfig::new(g, unit_law(), ball(&g, 1.0), 0.1);
        let s = run_limit(cfg, &[]).unwrap();
        measures.push(interface_cells(&s[0].theta).1);
    }
    let ratios: Vec<f64> = measures.windows(2).map(|m| m[1] / m[0]).collect();
    v.check(
        ratios.iter().all(|r| (0.3..=0.7).contains(r)),
        format!("interface measure ratios {ratios:.3?}"),
    );
}

fn monotone(report: &ConvergenceReport, column: impl Fn(&brinkman::ReportRow) -> f64, slack: f64) -> bool {
    report.times().iter().all(|&t| {
        report
            .at_time(t)
            .windows(2)
            .all(|w| column(w[1]) <= (1.0 + slack) * column(w[0]))
    })
}

fn sweep_setup(g: Grid, radius: f64) -> SweepSetup {
    let law = unit_law();
    SweepSetup {
        klevel: KLevelConfig::new(g, law.clone(), ball(&g, radius), 20.0, 0.5),
        limit: LimitConfig::new(g, law, ball(&g, radius), 0.5),
        p_norm: 2.0,
        tol_pos: 1e-3,
    }
}

fn criterion_5(v: &mut Verdict) {
    let g = Grid::new(1, 8.0, 1024).unwrap();
    let h = g.spacing();
    let setup = sweep_setup(g, 1.0);
    let times = [0.25, 0.5];
    let report = convergence_sweep(&setup, &[20.0, 80.0, 320.0], &times, 0.1).unwrap();
    let violations = monotonicity_violations(&report, 0.1);
    v.check(violations.is_empty(), format!("sup errors monotone ({} violations)", violations.len()));
    let last: Vec<_> = report.rows.iter().filter(|r| r.k == 320.0).collect();
    let worst_p = last.iter().map(|r| r.sup_err_p).fold(0.0, f64::max);
    v.check(worst_p <= 0.05, format!("sup_err_p(320) {worst_p:.2e}"));
    v.check(monotone(&report, |r| r.w2p_err, 0.0), "w2p_err monotone");
    let worst_h = last.iter().map(|r| r.hausdorff_pos_set).fold(0.0, f64::max);
    v.check(worst_h <= 5.0 * h, format!("Hausdorff(320) {:.1}h", worst_h / h));

    // density on the inner band
    let mut kcfg = setup.klevel.clone();
    kcfg.k = 320.0;
    let run = run_klevel(&kcfg, &times).unwrap();
    let limit = run_limit(setup.limit.clone(), &times).unwrap();
    let mut worst_n = 0.0_f64;
    for (ks, ls) in run.snapshots.iter().zip(&limit) {
        let inner = exclusion_band(&ls.theta, 0.1).unwrap().and(&ls.region()).unwrap();
        let dev = inner.indices().map(|i| (ks.n.get(i) - 1.0).abs()).fold(0.0, f64::max);
        worst_n = worst_n.max(dev);
    }
    v.check(worst_n <= 0.05, format!("sup|n - 1| inner {worst_n:.2e}"));
}

fn criterion_6(v: &mut Verdict) {
    let g = Grid::new(1, 8.0, 1024).unwrap();
    let mut gaps = Vec::new();
    for a in [0.2, 0.6] {
        let mut cfg = KLevelConfig::new(g, unit_law(), ball(&g, 1.0), 320.0, 0.1);
        cfg.amplitude = a;
        gaps.push(initial_layer_probe(&cfg, 0.1, 0.1).unwrap());
    }
    v.check(gaps.iter().all(|&x| x <= 0.02), format!("gaps {:.2e}, {:.2e}", gaps[0], gaps[1]));
    let diff = (gaps[0] - gaps[1]).abs();
    v.check(diff <= 0.01, format!("gap difference {diff:.1e}"));
}

fn criterion_7(v: &mut Verdict) {
    let g = Grid::new(2, 8.0, 256).unwrap();
    let report = convergence_sweep(&sweep_setup(g, 1.0), &[20.0, 80.0], &[0.25], 0.1).unwrap();
    let violations = monotonicity_violations(&report, 0.1);
    v.check(violations.is_empty(), format!("sup errors monotone ({} violations)", violations.len()));
    v.check(monotone(&report, |r| r.w2p_err, 0.0), "w2p_err monotone");
    let e = report.rows.last().unwrap().sup_err_p;
    v.check(e <= 0.1, format!("sup_err_p(80) {e:.2e}"));
}

type Criterion = (u32, &'static str, Duration, fn(&mut Verdict));

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "analytic identities", Duration::from_secs(5), criterion_1),
        (2, "elliptic solver", Duration::from_secs(30), criterion_2),
        (3, "flow maps", Duration::from_secs(60), criterion_3),
        (4, "limit solver", Duration::from_secs(60), criterion_4),
        (5, "1D convergence run", Duration::from_secs(300), criterion_5),
        (6, "initial layer", Duration::from_secs(300), criterion_6),
        (7, "2D smoke run", Duration::from_secs(600), criterion_7),
    ];
    // `cargo test -- <filter>` style selection by number
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut verdict = Verdict::new();
        run(&mut verdict);
        let elapsed = start.elapsed();
        verdict.check(
            elapsed <= budget,
            format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs()),
        );
        let pass = verdict.passed();
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} | {}",
            if pass { "PASS" } else { "FAIL" },
            verdict.detail()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
