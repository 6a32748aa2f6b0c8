//! Characteristics of `u_t + V . Du = 0`.
//!
//! Trajectories solve `X(x, s, t) = x + int_s^t V(X(x, s, r), r) dr` with
//! fixed-step RK4 over a time-interpolated velocity history. Transport uses
//! the backward form `u(x, t) = u0(X(x, t, 0))`, which is also how the level
//! set of a patch is evolved.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{mollify_space, Grid, GridError, Point, ScalarField, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("time interval [{s}, {t}] leaves the velocity span [{lo}, {hi}]")]
    OutOfSpan { s: f64, t: f64, lo: f64, hi: f64 },
    #[error("velocity frame timestamps must be strictly increasing")]
    UnorderedFrames,
    #[error("velocity sampler needs at least one frame")]
    NoFrames,
    #[error("level-set values must lie in [-1, 1], found {0}")]
    ThetaRange(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

const SPAN_SLACK: f64 = 1e-12;

/// Velocity history: linear in time between frames, multilinear in space.
#[derive(Debug, Clone)]
pub struct VelocitySampler {
    grid: Grid,
    times: Vec<f64>,
    frames: Vec<VectorField>,
    bound: f64,
}

impl VelocitySampler {
    pub fn new(frames: Vec<(f64, VectorField)>) -> Result<Self, FlowError> {
        let mut iter = frames.into_iter();
        let (t0, v0) = iter.next().ok_or(FlowError::NoFrames)?;
        let mut sampler = Self {
            grid: *v0.grid(),
            times: vec![t0],
            bound: v0.max_norm(),
            frames: vec![v0],
        };
        for (t, v) in iter {
            sampler.push(t, v)?;
        }
        Ok(sampler)
    }

    /// A time-independent field over `[t0, t1]`.
    pub fn frozen(v: VectorField, t0: f64, t1: f64) -> Result<Self, FlowError> {
        if t1 > t0 {
            Self::new(vec![(t0, v.clone()), (t1, v)])
        } else {
            Self::new(vec![(t0, v)])
        }
    }

    /// Appends a frame later than every stored one.
    pub fn push(&mut self, t: f64, v: VectorField) -> Result<(), FlowError> {
        if v.grid() != &self.grid {
            return Err(GridError::GridMismatch.into());
        }
        if !(t > *self.times.last().unwrap()) {
            return Err(FlowError::UnorderedFrames);
        }
        self.bound = self.bound.max(v.max_norm());
        self.times.push(t);
        self.frames.push(v);
        Ok(())
    }

    /// Overwrites the most recent frame, keeping its timestamp.
    pub fn replace_last(&mut self, v: VectorField) -> Result<(), FlowError> {
        if v.grid() != &self.grid {
            return Err(GridError::GridMismatch.into());
        }
        *self.frames.last_mut().unwrap() = v;
        self.bound = self.frames.iter().map(|f| f.max_norm()).fold(0.0, f64::max);
        Ok(())
    }

    /// Spatially mollified copy with kernel radius `eps`; `eps = 0` is a
    /// plain copy.
    pub fn mollified(&self, eps: f64) -> Result<Self, FlowError> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let frames = self
            .frames
            .iter()
            .map(|f| f.map_components(|c| mollify_space(c, eps)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.times.iter().copied().zip(frames).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Max speed over all frames; bounds every sampled value.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sample(&self, x: Point, t: f64) -> Point {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.frames[0].sample(x);
        }
        if t >= self.times[n - 1] {
            return self.frames[n - 1].sample(x);
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        let a = self.frames[j - 1].sample(x);
        let b = self.frames[j].sample(x);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }

    fn check_span(&self, s: f64, t: f64) -> Result<(), FlowError> {
        let (lo, hi) = self.span();
        let ok = |r: f64| r >= lo - SPAN_SLACK && r <= hi + SPAN_SLACK;
        if ok(s) && ok(t) {
            Ok(())
        } else {
            Err(FlowError::OutOfSpan { s, t, lo, hi })
        }
    }

    /// Fixed RK4 substep `min(h / 4M, |t - s| / 8)`.
    pub fn ode_step(&self, s: f64, t: f64) -> f64 {
        let span = (t - s).abs() / 8.0;
        if self.bound > 0.0 {
            (self.grid.spacing() / (4.0 * self.bound)).min(span)
        } else {
            span
        }
    }
}

/// RK4 trajectory of `dX/dr = sign * V(X, r)` from `(x, s)` to time `t`.
fn trace(x: Point, s: f64, t: f64, v: &VelocitySampler, sign: f64) -> Point {
    if s == t {
        return x;
    }
    let dt_ode = v.ode_step(s, t);
    let steps = ((t - s).abs() / dt_ode).ceil().max(1.0) as usize;
    let dt = (t - s) / steps as f64;
    let f = |p: Point, r: f64| {
        let u = v.sample(p, r);
        [sign * u[0], sign * u[1]]
    };
    let mut p = x;
    let mut r = s;
    for _ in 0..steps {
        let k1 = f(p, r);
        let k2 = f([p[0] + 0.5 * dt * k1[0], p[1] + 0.5 * dt * k1[1]], r + 0.5 * dt);
        let k3 = f([p[0] + 0.5 * dt * k2[0], p[1] + 0.5 * dt * k2[1]], r + 0.5 * dt);
        let k4 = f([p[0] + dt * k3[0], p[1] + dt * k3[1]], r + dt);
        for a in 0..2 {
            p[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        r += dt;
    }
    p
}

/// Position at time `t` of the characteristic through `x` at time `s`.
/// Coordinates are not wrapped back into the box.
pub fn integrate_trajectory(
    x: Point,
    s: f64,
    t: f64,
    v: &VelocitySampler,
) -> Result<Point, FlowError> {
    v.check_span(s, t)?;
    Ok(trace(x, s, t, v, 1.0))
}

/// The map `x -> X(x, s, t)` at every cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMapField {
    pub grid: Grid,
    pub source_time: f64,
    pub target_time: f64,
    /// `X(x, s, t) - x`, unwrapped.
    pub displacement: VectorField,
}

impl FlowMapField {
    /// Image of cell `idx`, unwrapped.
    pub fn target(&self, idx: usize) -> Point {
        let c = self.grid.center(idx);
        let d = self.displacement.at(idx);
        [c[0] + d[0], c[1] + d[1]]
    }

    /// Largest excess of `|Phi(x1) - Phi(x2)|` over the Holder bound
    /// `|x1 - x2|^{exp(-N T)}` across the given cell pairs, where `T` is the
    /// elapsed time of the map.
    pub fn holder_excess(&self, n_hat: f64, pairs: &[(usize, usize)]) -> f64 {
        let horizon = (self.target_time - self.source_time).abs();
        let exponent = (-n_hat * horizon).exp();
        pairs
            .iter()
            .map(|&(i, j)| {
                let before = self.grid.distance(self.grid.center(i), self.grid.center(j));
                let after = self.grid.distance(self.target(i), self.target(j));
                after - before.powf(exponent)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn flow_map(grid: &Grid, s: f64, t: f64, v: &VelocitySampler) -> Result<FlowMapField, FlowError> {
    if grid != v.grid() {
        return Err(GridError::GridMismatch.into());
    }
    v.check_span(s, t)?;
    let moved: Vec<Point> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let c = grid.center(i);
            let p = trace(c, s, t, v, 1.0);
            [p[0] - c[0], p[1] - c[1]]
        })
        .collect();
    let components = (0..grid.dim())
        .map(|a| moved.iter().map(|d| d[a]).collect())
        .collect();
    Ok(FlowMapField {
        grid: *grid,
        source_time: s,
        target_time: t,
        displacement: VectorField::new(*grid, components)?,
    })
}

fn pull_back(u0: &ScalarField, v: &VelocitySampler, t: f64, sign: f64) -> Result<ScalarField, FlowError> {
    let grid = *u0.grid();
    if &grid != v.grid() {
        return Err(GridError::GridMismatch.into());
    }
    v.check_span(t, 0.0)?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| u0.sample(trace(grid.center(i), t, 0.0, v, sign)))
        .collect();
    Ok(ScalarField::from_vec_unchecked(grid, values))
}

/// `u(x, t) = u0(X(x, t, 0))` for `u_t + V . Du = 0`.
pub fn transport_by_characteristics(
    u0: &ScalarField,
    v: &VelocitySampler,
    t: f64,
) -> Result<ScalarField, FlowError> {
    pull_back(u0, v, t, 1.0)
}

/// Evolves a level-set function by `theta_t - D theta . V = 0`, i.e. along
/// characteristics of the velocity `-V`. Callers pass `V = DW`.
pub fn evolve_patch(
    theta0: &ScalarField,
    v: &VelocitySampler,
    t: f64,
) -> Result<ScalarField, FlowError> {
    for &x in theta0.values() {
        if !(-1.0..=1.0).contains(&x) {
            return Err(FlowError::ThetaRange(x));
        }
    }
    pull_back(theta0, v, t, -1.0)
}

/// Backward departure points of one step of `f_t - v . Df = 0` with `v`
/// frozen over `dt`.
pub fn departure_points(v: &VectorField, dt: f64) -> Result<Vec<Point>, FlowError> {
    let grid = *v.grid();
    let sampler = VelocitySampler::frozen(v.clone(), 0.0, dt)?;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| trace(grid.center(i), dt, 0.0, &sampler, -1.0))
        .collect())
}

/// Semi-Lagrangian step: interpolates `f` at precomputed departure points.
pub fn semi_lagrangian(f: &ScalarField, departures: &[Point]) -> ScalarField {
    let values = departures.iter().map(|&p| f.sample(p)).collect();
    ScalarField::from_vec_unchecked(*f.grid(), values)
}
