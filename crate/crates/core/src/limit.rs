//! The incompressible-limit system: a patch `Omega_t` carried by `-DW`,
//! with `W` solving `-Lap W + W = H(W) chi_Omega`.
//!
//! The region is represented by a level-set function `theta` whose positive
//! set is `Omega_t`. `theta` is never re-initialized: each step evaluates
//! `theta(x, t) = theta0(X(x, t, 0))` over the stored velocity history.

use thiserror::Error;

use crate::elliptic::{velocity_from_potential, EllipticError, EllipticSolver};
use crate::flow::{evolve_patch, FlowError, VelocitySampler};
use crate::grid::{cfl_limit, Grid, GridError, Mask, ScalarField, VectorField};
use crate::growth::{GrowthError, GrowthLaw};
use crate::patch::PatchShape;

/// Sweeps without a decrease in the fixed-point update before giving up.
pub const STALL_LIMIT: usize = 10;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("fixed point is not contracting: update stalled at {delta:e} after {sweeps} sweeps")]
    NoContraction { sweeps: usize, delta: f64 },
    #[error("initial region is {margin} from the periodic seam, need at least {required}")]
    SeedTooClose { margin: f64, required: f64 },
    #[error("region reached within {distance} of the periodic seam at t = {t}")]
    SeamProximity { t: f64, distance: f64 },
    #[error("invalid limit configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointStats {
    pub sweeps: usize,
    pub final_delta: f64,
    /// Sup-norm change of `W` per sweep.
    pub deltas: Vec<f64>,
}

impl FixedPointStats {
    /// Largest ratio of consecutive updates, ignoring updates already at
    /// rounding level.
    pub fn max_ratio(&self) -> f64 {
        self.deltas
            .windows(2)
            .filter(|w| w[0] > 1e-13)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

/// Snapshot of the limit system.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub t: f64,
    /// Level set, positive inside the region.
    pub theta: ScalarField,
    pub w: ScalarField,
    /// `H(W)` inside the region, zero outside.
    pub p: ScalarField,
    /// Indicator of the region.
    pub n: ScalarField,
    pub v: VectorField,
}

impl LimitState {
    pub fn region(&self) -> Mask {
        Mask::above(&self.theta, 0.0)
    }
}

/// Iterates `W <- solve(H(W) chi)` until the sup change drops below `tol`.
pub fn solve_w_infinity(
    mask: &Mask,
    law: &GrowthLaw,
    solver: &EllipticSolver,
    tol: f64,
    guess: &ScalarField,
) -> Result<(ScalarField, ScalarField, FixedPointStats), LimitError> {
    if guess.grid() != mask.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let pressure = |w: &ScalarField| -> Result<ScalarField, LimitError> {
        let values = w
            .values()
            .iter()
            .zip(mask.cells())
            .map(|(&wi, &inside)| {
                if inside {
                    law.h_inverse(wi.max(0.0))
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScalarField::new(*w.grid(), values)?)
    };
    let mut w = guess.clone();
    let mut deltas = Vec::new();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    loop {
        let p = pressure(&w)?;
        let (next, _) = solver.solve(&p)?;
        let delta = next
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        deltas.push(delta);
        w = next;
        if delta <= tol {
            let p = pressure(&w)?;
            let stats = FixedPointStats {
                sweeps: deltas.len(),
                final_delta: delta,
                deltas,
            };
            return Ok((w, p, stats));
        }
        if delta < best {
            best = delta;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= STALL_LIMIT || deltas.len() >= MAX_SWEEPS {
            return Err(LimitError::NoContraction {
                sweeps: deltas.len(),
                delta,
            });
        }
    }
}

/// Interface cells: cells inside the region with a face neighbor outside.
/// Returns the mask and its measure `count * h^dim`.
pub fn interface_cells(theta: &ScalarField) -> (Mask, f64) {
    let grid = *theta.grid();
    let v = theta.values();
    let mask = Mask::from_fn(grid, |i| {
        v[i] > 0.0
            && (0..grid.dim()).any(|axis| {
                v[grid.shift(i, axis, 1)] <= 0.0 || v[grid.shift(i, axis, -1)] <= 0.0
            })
    });
    let measure = mask.measure();
    (mask, measure)
}

/// Parameters of a limit run.
#[derive(Debug, Clone)]
pub struct LimitConfig {
    pub grid: Grid,
    pub law: GrowthLaw,
    pub omega0: PatchShape,
    pub t_end: f64,
    pub cfl: f64,
    pub max_dt: f64,
    /// Fixed-point tolerance on `sup |W^{m+1} - W^m|`.
    pub fp_tol: f64,
    /// Mollification radius applied to stored velocity frames; zero disables.
    pub mollify_eps: f64,
    pub elliptic: EllipticSolver,
}

impl LimitConfig {
    pub fn new(grid: Grid, law: GrowthLaw, omega0: PatchShape, t_end: f64) -> Self {
        Self {
            grid,
            law,
            omega0,
            t_end,
            cfl: 0.9,
            max_dt: 0.005,
            fp_tol: 1e-10,
            mollify_eps: 0.0,
            elliptic: EllipticSolver::default(),
        }
    }

    fn validate(&self) -> Result<(), LimitError> {
        if self.law.nu() != 1.0 {
            return Err(LimitError::Config(
                "solvers use the rescaled system, law.nu must be 1".into(),
            ));
        }
        if !(self.t_end >= 0.0) || !(self.max_dt > 0.0) || !(self.cfl > 0.0) {
            return Err(LimitError::Config(
                "t_end >= 0, max_dt > 0 and cfl > 0 required".into(),
            ));
        }
        if !(self.fp_tol > 0.0) {
            return Err(LimitError::Config("fp_tol must be positive".into()));
        }
        Ok(())
    }
}

/// A running limit simulation: current state plus the velocity history the
/// level set is pulled back through.
#[derive(Debug, Clone)]
pub struct LimitSimulation {
    config: LimitConfig,
    theta0: ScalarField,
    history: VelocitySampler,
    state: LimitState,
    last_stats: FixedPointStats,
}

/// Builds the initial limit state from the truncated signed distance of
/// `Omega_0`.
pub fn init_limit(config: LimitConfig) -> Result<LimitSimulation, LimitError> {
    config.validate()?;
    let grid = config.grid;
    let required = grid.extent() / 8.0;
    let margin = config.omega0.seam_margin(&grid);
    if margin < required {
        return Err(LimitError::SeedTooClose { margin, required });
    }
    let theta0 = config.omega0.level_set(&grid);
    let mask = Mask::above(&theta0, 0.0);
    let (w, p, stats) = solve_w_infinity(
        &mask,
        &config.law,
        &config.elliptic,
        config.fp_tol,
        &ScalarField::zeros(grid),
    )?;
    let v = velocity_from_potential(&w);
    let history = VelocitySampler::new(vec![(0.0, frame(&config, &v)?)])?;
    let state = LimitState {
        t: 0.0,
        n: mask.to_field(),
        theta: theta0.clone(),
        w,
        p,
        v,
    };
    Ok(LimitSimulation {
        config,
        theta0,
        history,
        state,
        last_stats: stats,
    })
}

fn frame(config: &LimitConfig, v: &VectorField) -> Result<VectorField, LimitError> {
    if config.mollify_eps > 0.0 {
        Ok(v.map_components(|c| crate::grid::mollify_space(c, config.mollify_eps))?)
    } else {
        Ok(v.clone())
    }
}

/// Advances the region by `dt` and re-solves the potential on it.
pub fn step_limit(sim: &mut LimitSimulation, dt: f64) -> Result<(), LimitError> {
    sim.step(dt)
}

impl LimitSimulation {
    pub fn state(&self) -> &LimitState {
        &self.state
    }

    pub fn config(&self) -> &LimitConfig {
        &self.config
    }

    pub fn history(&self) -> &VelocitySampler {
        &self.history
    }

    pub fn last_stats(&self) -> &FixedPointStats {
        &self.last_stats
    }

    /// Step size from the frame policy: `cfl h / max|V|`, capped by `max_dt`.
    pub fn suggested_dt(&self) -> f64 {
        (self.config.cfl / crate::grid::MAX_CFL * cfl_limit(&self.state.v)).min(self.config.max_dt)
    }

    /// Transport first, then the fixed point on the new region.
    pub fn step(&mut self, dt: f64) -> Result<(), LimitError> {
        if !(dt > 0.0) {
            return Err(LimitError::Config(format!("step {dt} must be positive")));
        }
        let t_new = self.state.t + dt;
        // the newest frame is provisional until W at t_new is known
        let current = frame(&self.config, &self.state.v)?;
        self.history.push(t_new, current)?;
        let theta = evolve_patch(&self.theta0, &self.history, t_new)?;
        let mask = Mask::above(&theta, 0.0);
        let (w, p, stats) = solve_w_infinity(
            &mask,
            &self.config.law,
            &self.config.elliptic,
            self.config.fp_tol,
            &self.state.w,
        )?;
        let v = velocity_from_potential(&w);
        self.history.replace_last(frame(&self.config, &v)?)?;
        self.state = LimitState {
            t: t_new,
            n: mask.to_field(),
            theta,
            w,
            p,
            v,
        };
        self.last_stats = stats;
        self.check_seam()
    }

    fn check_seam(&self) -> Result<(), LimitError> {
        let distance = seam_distance(&self.state.region());
        let required = self.config.grid.extent() / 8.0;
        if distance < required {
            return Err(LimitError::SeamProximity {
                t: self.state.t,
                distance,
            });
        }
        Ok(())
    }
}

/// Distance from the selected cells to the faces of the box.
pub fn seam_distance(mask: &Mask) -> f64 {
    let grid = mask.grid();
    let l = grid.extent();
    let h = grid.spacing();
    mask.indices()
        .map(|i| {
            let c = grid.center(i);
            (0..grid.dim())
                .map(|a| (c[a] - 0.5 * h).min(l - c[a] - 0.5 * h))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Marches the limit system, returning states at `snapshot_times`
/// (`[t_end]` when empty).
pub fn run_limit(config: LimitConfig, snapshot_times: &[f64]) -> Result<Vec<LimitState>, LimitError> {
    let times = crate::klevel::normalize_snapshots(snapshot_times, config.t_end)
        .map_err(LimitError::Config)?;
    let mut sim = init_limit(config)?;
    let mut out = Vec::with_capacity(times.len());
    for &target in &times {
        while sim.state.t < target - 1e-12 {
            let dt = sim.suggested_dt().min(target - sim.state.t);
            sim.step(dt)?;
        }
        out.push(sim.state.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lp_norm;

    fn unit_law() -> GrowthLaw {
        GrowthLaw::linear(1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_region_gives_zero_potential() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let mask = Mask::new(g, vec![false; 64]).unwrap();
        let (w, p, stats) = solve_w_infinity(
            &mask,
            &unit_law(),
            &EllipticSolver::default(),
            1e-12,
            &ScalarField::zeros(g),
        )
        .unwrap();
        assert_eq!(w.max(), 0.0);
        assert_eq!(p.max(), 0.0);
        assert_eq!(stats.sweeps, 1);
    }

    #[test]
    fn full_torus_is_homeostatic() {
        let g = Grid::new(2, 4.0, 16).unwrap();
        let (w, p, _) = solve_w_infinity(
            &Mask::full(g),
            &unit_law(),
            &EllipticSolver::default(),
            1e-13,
            &ScalarField::zeros(g),
        )
        .unwrap();
        assert!(w.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(p.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn interface_of_interval_is_two_cells() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let theta = PatchShape::Ball {
            center: [4.0, 0.0],
            radius: 1.0,
        }
        .level_set(&g);
        let (mask, measure) = interface_cells(&theta);
        assert_eq!(mask.count(), 2);
        assert!((measure - 2.0 * g.spacing()).abs() < 1e-15);
        let (none, m0) = interface_cells(&ScalarField::constant(g, 1.0));
        assert!(none.is_empty());
        assert_eq!(m0, 0.0);
    }

    #[test]
    fn seed_near_seam_rejected() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let cfg = LimitConfig::new(
            g,
            unit_law(),
            PatchShape::Ball {
                center: [1.2, 0.0],
                radius: 1.0,
            },
            0.1,
        );
        assert!(matches!(init_limit(cfg), Err(LimitError::SeedTooClose { .. })));
    }

    #[test]
    fn static_when_potential_flat() {
        // empty region: W = 0, V = 0, nothing moves
        let g = Grid::new(1, 8.0, 64).unwrap();
        let cfg = LimitConfig::new(g, unit_law(), PatchShape::Empty, 0.1);
        let states = run_limit(cfg, &[0.05, 0.1]).unwrap();
        assert_eq!(states.len(), 2);
        assert!(states.iter().all(|s| s.theta.values().iter().all(|&x| x == -1.0)));
    }

    #[test]
    fn warm_and_cold_start_agree() {
        let g = Grid::new(1, 8.0, 128).unwrap();
        let theta = PatchShape::Ball {
            center: [4.0, 0.0],
            radius: 1.0,
        }
        .level_set(&g);
        let mask = Mask::above(&theta, 0.0);
        let solver = EllipticSolver::default();
        let (cold, _, cs) =
            solve_w_infinity(&mask, &unit_law(), &solver, 1e-12, &ScalarField::zeros(g)).unwrap();
        let warm_guess = cold.map(|x| x * 0.98);
        let (warm, _, ws) = solve_w_infinity(&mask, &unit_law(), &solver, 1e-12, &warm_guess).unwrap();
        let diff = lp_norm(&cold.combine(1.0, &warm, -1.0).unwrap(), f64::INFINITY, None).unwrap();
        assert!(diff < 1e-11);
        assert!(ws.sweeps < cs.sweeps);
    }

    #[test]
    fn region_expands() {
        let g = Grid::new(1, 8.0, 256).unwrap();
        let cfg = LimitConfig::new(
            g,
            unit_law(),
            PatchShape::Ball {
                center: [4.0, 0.0],
                radius: 1.0,
            },
            0.2,
        );
        let states = run_limit(cfg, &[0.0, 0.2]).unwrap();
        let m0 = states[0].region().measure();
        let m1 = states[1].region().measure();
        assert!(m1 > m0, "{m0} -> {m1}");
        let inside = states[1].region();
        assert!(lp_norm(&states[1].p, f64::INFINITY, Some(&inside)).unwrap() <= 1.0);
        assert!(states[1].p.values().iter().zip(inside.cells()).all(|(&p, &c)| !c || p >= 0.5 - 1e-9));
    }
}
