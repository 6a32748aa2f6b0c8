//! Comparison of finite-k runs with the limit run.
//!
//! Uniform convergence only holds away from the moving interface, so every
//! sup error is taken outside a band of width `delta` around it. The weak
//! limits of positivity sets are not computable from finitely many k; the
//! report substitutes sets thresholded at `tol_pos` and their Hausdorff
//! distance to the limit region.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{central_gradient, lp_norm, Grid, GridError, Mask, ScalarField};
use crate::klevel::{run_klevel, KLevelConfig, KLevelError, KLevelState};
use crate::limit::{interface_cells, run_limit, LimitConfig, LimitError, LimitState};

/// Fixed CSV header of a convergence report.
pub const REPORT_HEADER: &str =
    "k,t,delta,sup_err_p,sup_err_n,w2p_err,interface_measure,min_p_interface,hausdorff_pos_set";

/// Environment variable capping the worker count of a sweep.
pub const THREADS_ENV: &str = "BRINKMAN_THREADS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("band width {delta} is below the minimum {min} (two cells)")]
    BandTooNarrow { delta: f64, min: f64 },
    #[error("band width {delta} leaves no cells on the {side} of the interface")]
    BandTooWide { delta: f64, side: &'static str },
    #[error("states at different times: {0} vs {1}")]
    TimeMismatch(f64, f64),
    #[error("probe time {t_probe} is shorter than the reaction relaxation time {min}")]
    ProbeTooEarly { t_probe: f64, min: f64 },
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    KLevel(#[from] KLevelError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

/// Cells farther than `delta` from every interface cell of `theta`.
pub fn exclusion_band(theta: &ScalarField, delta: f64) -> Result<Mask, HarnessError> {
    let grid = *theta.grid();
    let h = grid.spacing();
    if !(delta >= 2.0 * h) {
        return Err(HarnessError::BandTooNarrow {
            delta,
            min: 2.0 * h,
        });
    }
    let (interface, _) = interface_cells(theta);
    let mut near = vec![false; grid.len()];
    let reach = (delta / h).ceil() as isize + 1;
    let dy_range = if grid.dim() == 2 { -reach..=reach } else { 0..=0 };
    for i in interface.indices() {
        let [ix, iy] = grid.axes(i);
        let c = grid.center(i);
        for dy in dy_range.clone() {
            for dx in -reach..=reach {
                let j = grid.flat(ix as isize + dx, iy as isize + dy);
                if !near[j] && grid.distance(c, grid.center(j)) <= delta {
                    near[j] = true;
                }
            }
        }
    }
    let mask = Mask::new(grid, near.iter().map(|n| !n).collect())?;
    let inside = mask.and(&Mask::above(theta, 0.0))?;
    if inside.is_empty() {
        return Err(HarnessError::BandTooWide {
            delta,
            side: "inside",
        });
    }
    if inside.count() == mask.count() {
        return Err(HarnessError::BandTooWide {
            delta,
            side: "outside",
        });
    }
    Ok(mask)
}

/// Symmetric Hausdorff distance between two cell sets, torus metric.
///
/// Zero when both are empty and the largest possible distance when only
/// one is.
pub fn hausdorff_distance(a: &Mask, b: &Mask) -> Result<f64, GridError> {
    if a.grid() != b.grid() {
        return Err(GridError::GridMismatch);
    }
    let grid = *a.grid();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => {
            return Ok(0.5 * grid.extent() * (grid.dim() as f64).sqrt());
        }
        _ => {}
    }
    Ok(one_sided(a, b).max(one_sided(b, a)))
}

// sup over cells of `from` not in `to` of the distance to `to`; the nearest
// cell of `to` always lies on its boundary
fn one_sided(from: &Mask, to: &Mask) -> f64 {
    let grid = *from.grid();
    let boundary: Vec<_> = to
        .indices()
        .filter(|&i| {
            (0..grid.dim()).any(|a| !to.get(grid.shift(i, a, 1)) || !to.get(grid.shift(i, a, -1)))
        })
        .map(|i| grid.center(i))
        .collect();
    if boundary.is_empty() {
        // `to` is the whole torus
        return 0.0;
    }
    let outside: Vec<_> = from.indices().filter(|&i| !to.get(i)).collect();
    outside
        .par_iter()
        .map(|&i| {
            let c = grid.center(i);
            boundary
                .iter()
                .map(|&b| grid.distance(c, b))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Cells whose centers lie in `[L/8, 7L/8]` along every axis.
pub fn compact_window(grid: &Grid) -> Mask {
    let l = grid.extent();
    Mask::from_fn(*grid, |i| {
        let c = grid.center(i);
        (0..grid.dim()).all(|a| c[a] >= l / 8.0 && c[a] <= 7.0 * l / 8.0)
    })
}

/// Pointwise Frobenius norm of the centered second-difference Hessian.
pub fn hessian_norm(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let h2 = grid.spacing().powi(2);
    let v = f.values();
    let d2 = |i: usize, a: usize| (v[grid.shift(i, a, 1)] - 2.0 * v[i] + v[grid.shift(i, a, -1)]) / h2;
    let values = (0..grid.len())
        .map(|i| {
            if grid.dim() == 1 {
                d2(i, 0).abs()
            } else {
                let [ix, iy] = grid.axes(i);
                let (x, y) = (ix as isize, iy as isize);
                let xy = (v[grid.flat(x + 1, y + 1)] - v[grid.flat(x + 1, y - 1)]
                    - v[grid.flat(x - 1, y + 1)]
                    + v[grid.flat(x - 1, y - 1)])
                    / (4.0 * h2);
                (d2(i, 0).powi(2) + d2(i, 1).powi(2) + 2.0 * xy * xy).sqrt()
            }
        })
        .collect();
    ScalarField::new(grid, values).expect("finite second differences")
}

/// `|Z|_p + |DZ|_p + |D^2 Z|_p` on the compact window.
pub fn w2p_error(wk: &ScalarField, winf: &ScalarField, p: f64) -> Result<f64, GridError> {
    let z = wk.combine(1.0, winf, -1.0)?;
    let window = compact_window(z.grid());
    let dz = central_gradient(&z);
    let grad = ScalarField::from_fn_index(*z.grid(), |i| {
        let g = dz.at(i);
        g[0].hypot(g[1])
    });
    Ok(lp_norm(&z, p, Some(&window))?
        + lp_norm(&grad, p, Some(&window))?
        + lp_norm(&hessian_norm(&z), p, Some(&window))?)
}

/// One line of a convergence report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub k: f64,
    pub t: f64,
    pub delta: f64,
    pub sup_err_p: f64,
    pub sup_err_n: f64,
    pub w2p_err: f64,
    /// Measure of the inner ring of `{p_k > tol_pos}`.
    pub interface_measure: f64,
    /// Smallest `p_k` on that ring.
    pub min_p_interface: f64,
    pub hausdorff_pos_set: f64,
}

impl ReportRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.k,
            self.t,
            self.delta,
            self.sup_err_p,
            self.sup_err_n,
            self.w2p_err,
            self.interface_measure,
            self.min_p_interface,
            self.hausdorff_pos_set
        )
    }
}

/// Options shared by every comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub delta: f64,
    /// Exponent of the `W^{2,p}` proxy.
    pub p_norm: f64,
    /// Threshold defining the discrete positivity set of `p_k`.
    pub tol_pos: f64,
}

impl CompareOptions {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            p_norm: 2.0,
            tol_pos: 1e-3,
        }
    }
}

/// Computes every report field for one pair of states.
pub fn compare_at_time(
    kstate: &KLevelState,
    lstate: &LimitState,
    opts: &CompareOptions,
) -> Result<ReportRow, HarnessError> {
    if kstate.p.grid() != lstate.theta.grid() {
        return Err(GridError::GridMismatch.into());
    }
    if (kstate.t - lstate.t).abs() > 1e-9 {
        return Err(HarnessError::TimeMismatch(kstate.t, lstate.t));
    }
    let band = exclusion_band(&lstate.theta, opts.delta)?;
    let sup_err_p = lp_norm(&kstate.p.combine(1.0, &lstate.p, -1.0)?, f64::INFINITY, Some(&band))?;
    let sup_err_n = lp_norm(&kstate.n.combine(1.0, &lstate.n, -1.0)?, f64::INFINITY, Some(&band))?;
    let w2p_err = w2p_error(&kstate.w, &lstate.w, opts.p_norm)?;
    let positive = kstate.positivity_set(opts.tol_pos);
    let (ring, interface_measure) = interface_cells(&positive.to_field().map(|x| x - 0.5));
    let min_p_interface = ring
        .indices()
        .map(|i| kstate.p.get(i))
        .fold(f64::INFINITY, f64::min);
    let min_p_interface = if min_p_interface.is_finite() {
        min_p_interface
    } else {
        0.0
    };
    let hausdorff_pos_set = hausdorff_distance(&positive, &lstate.region())?;
    Ok(ReportRow {
        k: kstate.k,
        t: kstate.t,
        delta: opts.delta,
        sup_err_p,
        sup_err_n,
        w2p_err,
        interface_measure,
        min_p_interface,
        hausdorff_pos_set,
    })
}

/// Rows ordered by time, then by position in the k-ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    /// Rows at one snapshot time, in ladder order.
    pub fn at_time(&self, t: f64) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| (r.t - t).abs() < 1e-12).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !ts.iter().any(|t| (t - r.t).abs() < 1e-12) {
                ts.push(r.t);
            }
        }
        ts
    }

    /// Human-readable table with the caveats the numbers need.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str("# errors off a band of half-width delta around the limit interface\n");
        s.push_str("# positivity sets are thresholded at tol_pos; a finite k-ladder shows trends, not limits\n");
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>11} {:>11} {:>11} {:>11} {:>11}",
            "k", "t", "sup_err_p", "sup_err_n", "w2p_err", "min_p_ring", "hausdorff"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8} {:>6} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
                r.k, r.t, r.sup_err_p, r.sup_err_n, r.w2p_err, r.min_p_interface, r.hausdorff_pos_set
            );
        }
        s
    }
}

/// Everything a sweep needs besides the ladder itself. `klevel.k` and both
/// end times are overridden by the sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub klevel: KLevelConfig,
    pub limit: LimitConfig,
    pub p_norm: f64,
    pub tol_pos: f64,
}

/// Worker count: `BRINKMAN_THREADS` when set and positive, else the number
/// of available cores.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the limit once and every k of the ladder (concurrently), comparing
/// at each time.
pub fn convergence_sweep(
    setup: &SweepSetup,
    ks: &[f64],
    times: &[f64],
    delta: f64,
) -> Result<ConvergenceReport, HarnessError> {
    if ks.len() < 2 {
        return Err(HarnessError::Sweep("need at least two values of k".into()));
    }
    if ks.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(HarnessError::Sweep("k values must be ascending".into()));
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(HarnessError::Sweep("need finite nonnegative comparison times".into()));
    }
    let h = setup.klevel.grid.spacing();
    if !(delta >= 2.0 * h) {
        return Err(HarnessError::BandTooNarrow {
            delta,
            min: 2.0 * h,
        });
    }
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    let t_end = *times.last().unwrap();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Sweep(e.to_string()))?;
    let mut limit_cfg = setup.limit.clone();
    limit_cfg.t_end = t_end;
    let (limit_states, k_runs) = pool.install(|| {
        rayon::join(
            || run_limit(limit_cfg, &times),
            || {
                ks.par_iter()
                    .map(|&k| {
                        let mut cfg = setup.klevel.clone();
                        cfg.k = k;
                        cfg.t_end = t_end;
                        run_klevel(&cfg, &times)
                    })
                    .collect::<Vec<_>>()
            },
        )
    });
    let limit_states = limit_states?;
    let k_runs = k_runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let opts = CompareOptions {
        delta,
        p_norm: setup.p_norm,
        tol_pos: setup.tol_pos,
    };
    let mut rows = Vec::with_capacity(times.len() * ks.len());
    for (ti, lstate) in limit_states.iter().enumerate() {
        for run in &k_runs {
            rows.push(compare_at_time(&run.snapshots[ti], lstate, &opts)?);
        }
    }
    Ok(ConvergenceReport { rows })
}

/// Places where an error column grows along the ladder by more than the
/// relative `slack`. Checks `sup_err_p` and `sup_err_n`.
pub fn monotonicity_violations(report: &ConvergenceReport, slack: f64) -> Vec<String> {
    let mut out = Vec::new();
    for t in report.times() {
        let rows = report.at_time(t);
        for pair in rows.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for (name, ea, eb) in [
                ("sup_err_p", a.sup_err_p, b.sup_err_p),
                ("sup_err_n", a.sup_err_n, b.sup_err_n),
            ] {
                if eb > (1.0 + slack) * ea + 1e-12 {
                    out.push(format!(
                        "t = {t}: {name} grows from {ea:e} (k = {}) to {eb:e} (k = {})",
                        a.k, b.k
                    ));
                }
            }
        }
    }
    out
}

/// `sup |p_k - H(W_k)|` over `Omega_0` eroded by `erosion`, at `t_probe`.
///
/// Requires `t_probe >= 10 / (k alpha P_M)` so the reaction has had time to
/// relax.
pub fn initial_layer_probe(
    config: &KLevelConfig,
    t_probe: f64,
    erosion: f64,
) -> Result<f64, HarnessError> {
    let law = &config.law;
    let min = 10.0 / (config.k * law.alpha() * law.p_max());
    if !(t_probe >= min) {
        return Err(HarnessError::ProbeTooEarly { t_probe, min });
    }
    let mut cfg = config.clone();
    cfg.t_end = t_probe;
    let run = run_klevel(&cfg, &[t_probe])?;
    let state = &run.snapshots[0];
    let grid = cfg.grid;
    let core = Mask::from_fn(grid, |i| {
        cfg.omega0.signed_distance(&grid, grid.center(i)) >= erosion
    });
    if core.is_empty() {
        return Err(HarnessError::Sweep(format!(
            "eroding the initial region by {erosion} leaves nothing"
        )));
    }
    let mut gap = 0.0_f64;
    for i in core.indices() {
        let target = law.h_inverse(state.w.get(i).max(0.0)).map_err(KLevelError::from)?;
        gap = gap.max((state.p.get(i) - target).abs());
    }
    Ok(gap)
}
