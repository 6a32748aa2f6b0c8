//! The rescaled finite-k system
//!
//! ```text
//! p_t - Dp . DW = k p (W - p + G(p)),    -Lap W + W = p,
//! ```
//!
//! marched by splitting: transport along `-DW`, then the exact frozen-W
//! reaction, then a fresh elliptic solve.
//!
//! Besides `p` the state carries a support level set `psi` transported by
//! the same scheme. Any interpolating or upwind transport smears a little
//! positive pressure ahead of the front, and the stiff reaction (rate of
//! order `k`) amplifies that smear into a spurious front speed. In the
//! continuum the support of `p` moves exactly with `-DW`, so after each
//! transport the pressure is zeroed where `psi <= 0`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::elliptic::{velocity_from_potential, EllipticError, EllipticSolver};
use crate::flow::{departure_points, semi_lagrangian, FlowError};
use crate::grid::{cfl_limit, upwind_advect, Grid, GridError, Mask, ScalarField, VectorField, MAX_CFL};
use crate::growth::{GrowthError, GrowthLaw};
use crate::limit::{seam_distance, solve_w_infinity, LimitError};
use crate::patch::PatchShape;

/// Slack on the pressure bounds checked after every step.
pub const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KLevelError {
    #[error("invalid k-level configuration: {0}")]
    Config(String),
    #[error("bound violated at t = {t}: {what}")]
    BoundViolation { t: f64, what: String },
    #[error("support reached within {distance} of the periodic seam at t = {t}")]
    SeamProximity { t: f64, distance: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

/// Transport discretization for the pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Advection {
    #[default]
    SemiLagrangian,
    Upwind,
}

impl FromStr for Advection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semi-lagrangian" => Ok(Advection::SemiLagrangian),
            "upwind" => Ok(Advection::Upwind),
            other => Err(format!("unknown advection scheme '{other}'")),
        }
    }
}

impl fmt::Display for Advection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Advection::SemiLagrangian => "semi-lagrangian",
            Advection::Upwind => "upwind",
        })
    }
}

/// Shape of the initial pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialProfile {
    /// `a * smoothstep` ramping up over `4h` on `Omega_0` eroded by `2h`.
    #[default]
    Smooth,
    /// The limit pressure `H(W) chi_Omega_0`, which has no initial layer.
    Limit,
}

impl FromStr for InitialProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smooth" => Ok(InitialProfile::Smooth),
            "limit" => Ok(InitialProfile::Limit),
            other => Err(format!("unknown initial profile '{other}'")),
        }
    }
}

impl fmt::Display for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialProfile::Smooth => "smooth",
            InitialProfile::Limit => "limit",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KLevelConfig {
    pub grid: Grid,
    pub law: GrowthLaw,
    pub omega0: PatchShape,
    pub k: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub max_dt: f64,
    /// Plateau value `a` of the smooth initial profile.
    pub amplitude: f64,
    pub profile: InitialProfile,
    pub advection: Advection,
    pub elliptic: EllipticSolver,
}

impl KLevelConfig {
    pub fn new(grid: Grid, law: GrowthLaw, omega0: PatchShape, k: f64, t_end: f64) -> Self {
        let amplitude = 0.2 * law.p_max();
        Self {
            grid,
            law,
            omega0,
            k,
            t_end,
            cfl: MAX_CFL,
            max_dt: 0.005,
            amplitude,
            profile: InitialProfile::Smooth,
            advection: Advection::SemiLagrangian,
            elliptic: EllipticSolver::default(),
        }
    }

    pub fn validate(&self) -> Result<(), KLevelError> {
        let bad = |m: &str| Err(KLevelError::Config(m.to_string()));
        if self.law.nu() != 1.0 {
            return bad("solvers use the rescaled system, law.nu must be 1");
        }
        if !(self.k >= 2.0) || !self.k.is_finite() {
            return bad("k must be finite and at least 2");
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be finite and nonnegative");
        }
        if !(self.cfl > 0.0) || !(self.max_dt > 0.0) {
            return bad("cfl and max_dt must be positive");
        }
        if !(self.amplitude > 0.0 && self.amplitude <= self.law.p_max()) {
            return bad("amplitude must lie in (0, p_max]");
        }
        Ok(())
    }
}

/// Snapshot of the finite-k system.
#[derive(Debug, Clone, PartialEq)]
pub struct KLevelState {
    pub t: f64,
    pub k: f64,
    pub p: ScalarField,
    pub n: ScalarField,
    pub w: ScalarField,
    pub v: VectorField,
    /// Support level set, positive where `p` may be positive.
    pub psi: ScalarField,
}

impl KLevelState {
    /// Cells with `p > threshold`.
    pub fn positivity_set(&self, threshold: f64) -> Mask {
        Mask::above(&self.p, threshold)
    }
}

/// `n = ((k-1) p / k)^(1/(k-1))`.
pub fn density_from_pressure(p: &ScalarField, k: f64) -> ScalarField {
    p.map(|pi| {
        if pi <= 0.0 {
            0.0
        } else {
            ((k - 1.0) * pi / k).powf(1.0 / (k - 1.0))
        }
    })
}

/// `p = k/(k-1) n^(k-1)`.
pub fn pressure_from_density(n: &ScalarField, k: f64) -> ScalarField {
    n.map(|ni| if ni <= 0.0 { 0.0 } else { k / (k - 1.0) * ni.powf(k - 1.0) })
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Initial state at `t = 0`.
pub fn init_klevel(config: &KLevelConfig) -> Result<KLevelState, KLevelError> {
    config.validate()?;
    let grid = config.grid;
    let h = grid.spacing();
    let dist = ScalarField::from_fn(grid, |x| {
        config.omega0.signed_distance(&grid, x).clamp(-2.0, 2.0)
    });
    let (p, psi) = match config.profile {
        InitialProfile::Smooth => (
            dist.map(|d| config.amplitude * smoothstep((d - 2.0 * h) / (4.0 * h))),
            dist.map(|d| (d - 2.0 * h).clamp(-1.0, 1.0)),
        ),
        InitialProfile::Limit => {
            let mask = Mask::above(&dist, 0.0);
            let (_, p, _) = solve_w_infinity(
                &mask,
                &config.law,
                &config.elliptic,
                1e-12,
                &ScalarField::zeros(grid),
            )?;
            (p, dist.map(|d| d.clamp(-1.0, 1.0)))
        }
    };
    let (w, _) = config.elliptic.solve(&p)?;
    let v = velocity_from_potential(&w);
    Ok(KLevelState {
        t: 0.0,
        k: config.k,
        n: density_from_pressure(&p, config.k),
        p,
        w,
        v,
        psi,
    })
}

/// One split step of length `dt`.
///
/// Transport `p` and `psi` with `V = DW` of the incoming state, cut `p` to
/// `{psi > 0}`, react with the incoming `W`, then re-solve `W` so the
/// returned state is self-consistent. First order in `dt`.
pub fn step_klevel(
    state: &KLevelState,
    config: &KLevelConfig,
    dt: f64,
) -> Result<KLevelState, KLevelError> {
    let limit = cfl_limit(&state.v);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(GridError::CflViolation { dt, limit }.into());
    }
    let (p_adv, psi) = match config.advection {
        Advection::SemiLagrangian => {
            let departures = departure_points(&state.v, dt)?;
            (
                semi_lagrangian(&state.p, &departures),
                semi_lagrangian(&state.psi, &departures),
            )
        }
        Advection::Upwind => (
            upwind_advect(&state.p, &state.v, dt)?,
            upwind_advect(&state.psi, &state.v, dt)?,
        ),
    };
    let law = &config.law;
    let p = p_adv.zip_map(&psi, |p, s| if s > 0.0 { p.max(0.0) } else { 0.0 })?;
    let p = p.zip_map(&state.w, |p, w| law.exact_reaction_step(p, w.max(0.0), state.k, dt))?;
    let (w, _) = config.elliptic.solve(&p)?;
    let next = KLevelState {
        t: state.t + dt,
        k: state.k,
        n: density_from_pressure(&p, state.k),
        v: velocity_from_potential(&w),
        p,
        w,
        psi,
    };
    check_bounds(&next, law)?;
    Ok(next)
}

fn check_bounds(state: &KLevelState, law: &GrowthLaw) -> Result<(), KLevelError> {
    let pm = law.p_max();
    let (pmin, pmax) = (state.p.min(), state.p.max());
    if pmin < 0.0 || pmax > pm + BOUND_SLACK {
        return Err(KLevelError::BoundViolation {
            t: state.t,
            what: format!("pressure range [{pmin}, {pmax}] outside [0, {pm}]"),
        });
    }
    if state.w.min() < -BOUND_SLACK {
        return Err(KLevelError::BoundViolation {
            t: state.t,
            what: format!("potential minimum {} is negative", state.w.min()),
        });
    }
    Ok(())
}

fn check_seam(state: &KLevelState) -> Result<(), KLevelError> {
    let grid = state.p.grid();
    let distance = seam_distance(&Mask::above(&state.psi, 0.0));
    if distance < grid.extent() / 8.0 {
        return Err(KLevelError::SeamProximity {
            t: state.t,
            distance,
        });
    }
    Ok(())
}

/// Sorts requested snapshot times, defaulting to `[t_end]`.
pub fn normalize_snapshots(times: &[f64], t_end: f64) -> Result<Vec<f64>, String> {
    if times.is_empty() {
        return Ok(vec![t_end]);
    }
    let mut out = times.to_vec();
    if let Some(bad) = out.iter().find(|t| !(**t >= 0.0 && **t <= t_end)) {
        return Err(format!("snapshot time {bad} outside [0, {t_end}]"));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Output of a k-level march.
#[derive(Debug, Clone)]
pub struct KLevelRun {
    pub snapshots: Vec<KLevelState>,
    /// `(t, max |V|)` after every step: the empirical speed bound.
    pub speed_history: Vec<(f64, f64)>,
    pub steps: usize,
}

/// Marches to every snapshot time with `dt = min(cfl h / |V|_1, max_dt)`.
/// Bound violations abort the run.
pub fn run_klevel(config: &KLevelConfig, snapshot_times: &[f64]) -> Result<KLevelRun, KLevelError> {
    let times = normalize_snapshots(snapshot_times, config.t_end).map_err(KLevelError::Config)?;
    let mut state = init_klevel(config)?;
    check_bounds(&state, &config.law)?;
    if !Mask::above(&state.psi, 0.0).is_empty() {
        check_seam(&state)?;
    }
    let mut run = KLevelRun {
        snapshots: Vec::with_capacity(times.len()),
        speed_history: vec![(0.0, state.v.max_norm())],
        steps: 0,
    };
    for &target in &times {
        while state.t < target - 1e-12 {
            let speed = state.v.max_l1_speed();
            let h = config.grid.spacing();
            let cfl_dt = if speed > 0.0 {
                config.cfl * h / speed
            } else {
                f64::INFINITY
            };
            if config.cfl > MAX_CFL {
                // an unstable request is an error even when max_dt would hide it
                return Err(GridError::CflViolation {
                    dt: cfl_dt.min(config.max_dt),
                    limit: cfl_limit(&state.v).min(config.max_dt * MAX_CFL / config.cfl),
                }
                .into());
            }
            let dt = cfl_dt.min(config.max_dt).min(target - state.t);
            state = step_klevel(&state, config, dt)?;
            run.steps += 1;
            run.speed_history.push((state.t, state.v.max_norm()));
            check_seam(&state)?;
        }
        run.snapshots.push(state.clone());
    }
    Ok(run)
}
