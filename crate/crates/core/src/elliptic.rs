//! Screened Poisson solves `-nu Lap_h W + W = p` on the periodic grid.
//!
//! Both backends target the same 3-point / 5-point stencil problem: the
//! spectral solve divides by the stencil's Fourier symbol, and red-black SOR
//! iterates on the stencil directly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::grid::{central_gradient, Grid, GridError, ScalarField, VectorField};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const TOL_RANGE: (f64, f64) = (1e-13, 1e-6);
const LOG_LIPSCHITZ_SEED: u64 = 0x5EED_1057;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("elliptic solve did not converge: residual {residual:e} after {iterations} sweeps")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("tolerance {0:e} outside [1e-13, 1e-6]")]
    BadTolerance(f64),
    #[error("viscosity must be positive, got {0}")]
    BadViscosity(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EllipticMethod {
    #[default]
    Spectral,
    Sor,
}

impl std::str::FromStr for EllipticMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "sor" => Ok(Self::Sor),
            other => Err(format!("unknown elliptic method {other:?}")),
        }
    }
}

impl std::fmt::Display for EllipticMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Spectral => "spectral",
            Self::Sor => "sor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolveStats {
    pub iterations: usize,
    pub residual_linf: f64,
    pub method: EllipticMethod,
}

/// Configured screened Poisson solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolver {
    pub method: EllipticMethod,
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EllipticSolver {
    fn default() -> Self {
        Self {
            method: EllipticMethod::Spectral,
            nu: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl EllipticSolver {
    pub fn new(method: EllipticMethod, nu: f64, tol: f64) -> Self {
        Self {
            method,
            nu,
            tol,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    /// Solves `-nu Lap_h W + W = p`; the residual satisfies
    /// `|r|_inf <= tol (1 + |p|_inf)`, or the rounding floor of evaluating
    /// the stencil when that is larger (see [`residual_floor`]).
    pub fn solve(&self, p: &ScalarField) -> Result<(ScalarField, EllipticSolveStats), EllipticError> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(EllipticError::BadViscosity(self.nu));
        }
        if !(TOL_RANGE.0..=TOL_RANGE.1).contains(&self.tol) {
            return Err(EllipticError::BadTolerance(self.tol));
        }
        let p_sup = p.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let target = (self.tol * (1.0 + p_sup)).max(residual_floor(p.grid(), self.nu, p_sup));
        let (w, iterations) = match self.method {
            EllipticMethod::Spectral => (spectral_solve(p, self.nu), 1),
            EllipticMethod::Sor => sor_solve(p, self.nu, target, self.max_iter)?,
        };
        let residual_linf = residual_linf(&w, p, self.nu);
        if residual_linf > target {
            return Err(EllipticError::NoConvergence {
                iterations,
                residual: residual_linf,
            });
        }
        Ok((
            w,
            EllipticSolveStats {
                iterations,
                residual_linf,
                method: self.method,
            },
        ))
    }
}

/// Smallest residual that can be certified in double precision: the
/// stencil multiplies rounding errors in `W` by up to `1 + 4 nu dim / h^2`.
pub fn residual_floor(grid: &Grid, nu: f64, p_sup: f64) -> f64 {
    let amplification = 1.0 + 4.0 * nu * grid.dim() as f64 / grid.spacing().powi(2);
    4.0 * f64::EPSILON * amplification * (1.0 + p_sup)
}

/// Spectral solve of `-nu Lap_h W + W = p` with tolerance `tol`.
pub fn solve_brinkman(
    p: &ScalarField,
    nu: f64,
    tol: f64,
) -> Result<(ScalarField, EllipticSolveStats), EllipticError> {
    EllipticSolver::new(EllipticMethod::Spectral, nu, tol).solve(p)
}

/// Standard 3-point / 5-point periodic Laplacian.
pub fn discrete_laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let v = f.values();
    let values = (0..grid.len())
        .map(|i| {
            let mut s = -2.0 * grid.dim() as f64 * v[i];
            for axis in 0..grid.dim() {
                s += v[grid.shift(i, axis, 1)] + v[grid.shift(i, axis, -1)];
            }
            s * inv_h2
        })
        .collect();
    ScalarField::from_vec_unchecked(grid, values)
}

/// Applies `-nu Lap_h + 1`.
pub fn apply_operator(w: &ScalarField, nu: f64) -> ScalarField {
    let lap = discrete_laplacian(w);
    lap.zip_map(w, |l, x| -nu * l + x).expect("same grid")
}

fn residual_linf(w: &ScalarField, p: &ScalarField, nu: f64) -> f64 {
    apply_operator(w, nu)
        .values()
        .iter()
        .zip(p.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Fourier symbol of `-nu Lap_h + 1` along one axis, without the `1`.
fn axis_symbol(grid: &Grid, nu: f64) -> Vec<f64> {
    let n = grid.n_cells();
    let h = grid.spacing();
    (0..n)
        .map(|m| {
            let s = (PI * m as f64 / n as f64).sin();
            4.0 * nu * s * s / (h * h)
        })
        .collect()
}

fn spectral_solve(p: &ScalarField, nu: f64) -> ScalarField {
    let grid = *p.grid();
    let n = grid.n_cells();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let symbol = axis_symbol(&grid, nu);
    let mut data: Vec<Complex<f64>> = p.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    let scale = 1.0 / grid.len() as f64;

    if grid.dim() == 1 {
        fwd.process(&mut data);
        for (c, s) in data.iter_mut().zip(&symbol) {
            *c /= 1.0 + s;
        }
        inv.process(&mut data);
    } else {
        // rows are contiguous; columns go through a transpose
        fwd.process(&mut data);
        let mut t = transpose(&data, n);
        fwd.process(&mut t);
        for ky in 0..n {
            for kx in 0..n {
                // t is indexed [kx][ky] after the transpose
                t[kx * n + ky] /= 1.0 + symbol[kx] + symbol[ky];
            }
        }
        inv.process(&mut t);
        data = transpose(&t, n);
        inv.process(&mut data);
    }
    let values = data.iter().map(|c| c.re * scale).collect();
    ScalarField::from_vec_unchecked(grid, values)
}

fn transpose(a: &[Complex<f64>], n: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = a[r * n + c];
        }
    }
    out
}

fn sor_solve(
    p: &ScalarField,
    nu: f64,
    target: f64,
    max_iter: usize,
) -> Result<(ScalarField, usize), EllipticError> {
    let grid = *p.grid();
    let n = grid.n_cells();
    let d = grid.dim();
    let h2 = grid.spacing() * grid.spacing();
    let off = nu / h2;
    let diag = 1.0 + 2.0 * d as f64 * off;
    let rho = 2.0 * d as f64 * off * (2.0 * PI / n as f64).cos() / diag;
    let omega = 2.0 / (1.0 + (1.0 - rho * rho).max(0.0).sqrt());
    let rhs = p.values();
    let mut w = rhs.to_vec();
    let color = |i: usize| {
        let [ix, iy] = grid.axes(i);
        (ix + iy) % 2
    };
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iter {
        for parity in 0..2 {
            for i in 0..grid.len() {
                if color(i) != parity {
                    continue;
                }
                let mut nb = 0.0;
                for axis in 0..d {
                    nb += w[grid.shift(i, axis, 1)] + w[grid.shift(i, axis, -1)];
                }
                let gs = (rhs[i] + off * nb) / diag;
                w[i] += omega * (gs - w[i]);
            }
        }
        iterations += 1;
        if iterations % 10 == 0 {
            let field = ScalarField::from_vec_unchecked(grid, w.clone());
            residual = residual_linf(&field, p, nu);
            if residual <= 0.5 * target {
                return Ok((field, iterations));
            }
        }
    }
    Err(EllipticError::NoConvergence {
        iterations,
        residual,
    })
}

/// `V = D W` by centered differences.
///
/// `V.max_norm()` is the velocity bound used for timestep budgeting.
pub fn velocity_from_potential(w: &ScalarField) -> VectorField {
    central_gradient(w)
}

/// Largest observed `|V(x) - V(y)| / (r |ln r|)` with `r = |x - y|` in
/// `[h, 1/2]`.
///
/// Each of the `samples` random lattice offsets is checked against every
/// cell, so the estimate is shift invariant.
pub fn empirical_log_lipschitz(v: &VectorField, samples: usize) -> f64 {
    let grid = *v.grid();
    let h = grid.spacing();
    let r_max = 0.5_f64.min(0.5 * grid.extent());
    let reach = (r_max / h).floor() as i64;
    if reach < 1 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(LOG_LIPSCHITZ_SEED);
    let mut best = 0.0_f64;
    let mut drawn = 0;
    while drawn < samples {
        let jx = rng.random_range(-reach..=reach);
        let jy = if grid.dim() == 2 {
            rng.random_range(-reach..=reach)
        } else {
            0
        };
        let r = h * (jx as f64).hypot(jy as f64);
        if r < h || r > r_max || r >= 1.0 {
            continue;
        }
        drawn += 1;
        let denom = r * r.ln().abs();
        for i in 0..grid.len() {
            let [ix, iy] = grid.axes(i);
            let j = grid.flat(ix as isize + jx as isize, iy as isize + jy as isize);
            let (a, b) = (v.at(i), v.at(j));
            let diff = (a[0] - b[0]).hypot(a[1] - b[1]);
            best = best.max(diff / denom);
        }
    }
    best
}
