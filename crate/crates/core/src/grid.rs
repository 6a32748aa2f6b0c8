//! Uniform periodic grids in one or two dimensions, the fields that live on
//! them, and the stencil operations shared by every solver.
//!
//! Cells are centered at `(i + 1/2) h` along each axis. Two-dimensional
//! fields are stored row-major with `x` as the fast index, so cell `(ix, iy)`
//! lives at `iy * n + ix`.

use thiserror::Error;

/// A point in the box. One-dimensional grids ignore the second coordinate.
pub type Point = [f64; 2];

/// Largest Courant number accepted by explicit advection.
pub const MAX_CFL: f64 = 0.9;

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("grid needs at least {MIN_CELLS} cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("grid extent must be positive and finite, got {0}")]
    BadExtent(f64),
    #[error("field has {got} values but grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("CFL violation: dt = {dt:e} exceeds the stable limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("norm exponent must be >= 1, got {0}")]
    BadExponent(f64),
    #[error("mollification radius {eps:e} is smaller than the spacing {h:e}")]
    RadiusTooSmall { eps: f64, h: f64 },
}

/// Uniform periodic grid over the box `[0, extent)^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, n_cells: usize) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        if n_cells < MIN_CELLS {
            return Err(GridError::TooFewCells(n_cells));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(GridError::BadExtent(extent));
        }
        Ok(Self {
            dim,
            extent,
            n_cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n_cells as f64
    }

    /// Total number of cells, `n_cells^dim`.
    pub fn len(&self) -> usize {
        self.n_cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Same box, `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_cells: self.n_cells * factor,
            ..*self
        }
    }

    /// Per-axis cell indices of a flat index.
    pub fn axes(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n_cells, idx / self.n_cells]
        }
    }

    /// Flat index of per-axis indices, wrapping periodically.
    pub fn flat(&self, ix: isize, iy: isize) -> usize {
        let n = self.n_cells as isize;
        let x = ix.rem_euclid(n) as usize;
        if self.dim == 1 {
            x
        } else {
            let y = iy.rem_euclid(n) as usize;
            y * self.n_cells + x
        }
    }

    pub fn center(&self, idx: usize) -> Point {
        let h = self.spacing();
        let [ix, iy] = self.axes(idx);
        if self.dim == 1 {
            [(ix as f64 + 0.5) * h, 0.0]
        } else {
            [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
        }
    }

    /// Index of the neighbor `offset` cells away along `axis`.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let [ix, iy] = self.axes(idx);
        let (mut x, mut y) = (ix as isize, iy as isize);
        if axis == 0 {
            x += offset;
        } else {
            y += offset;
        }
        self.flat(x, y)
    }

    /// Minimal-image representative of a coordinate difference.
    pub fn wrap_delta(&self, d: f64) -> f64 {
        d - self.extent * (d / self.extent).round()
    }

    /// Periodic (torus) distance between two points.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let dx = self.wrap_delta(a[0] - b[0]);
        if self.dim == 1 {
            dx.abs()
        } else {
            let dy = self.wrap_delta(a[1] - b[1]);
            dx.hypot(dy)
        }
    }

    /// Cell containing a point (after periodic wrapping).
    pub fn locate(&self, p: Point) -> usize {
        let h = self.spacing();
        let ix = (p[0] / h).floor() as isize;
        let iy = if self.dim == 1 {
            0
        } else {
            (p[1] / h).floor() as isize
        };
        self.flat(ix, iy)
    }

    fn same_as(&self, other: &Grid) -> Result<(), GridError> {
        if self == other {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }
}

/// Periodic multilinear interpolation of cell-centered `values` at `p`.
fn interpolate(grid: &Grid, values: &[f64], p: Point) -> f64 {
    let h = grid.spacing();
    let sx = p[0] / h - 0.5;
    let ix = sx.floor();
    let wx = sx - ix;
    let ix = ix as isize;
    if grid.dim == 1 {
        let a = values[grid.flat(ix, 0)];
        let b = values[grid.flat(ix + 1, 0)];
        return a + wx * (b - a);
    }
    let sy = p[1] / h - 0.5;
    let iy = sy.floor();
    let wy = sy - iy;
    let iy = iy as isize;
    let v00 = values[grid.flat(ix, iy)];
    let v10 = values[grid.flat(ix + 1, iy)];
    let v01 = values[grid.flat(ix, iy + 1)];
    let v11 = values[grid.flat(ix + 1, iy + 1)];
    (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) + wy * ((1.0 - wx) * v01 + wx * v11)
}

/// Real values, one per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::from_vec_unchecked(grid, values)
    }

    /// Field from a function of the cell index.
    pub fn from_fn_index(grid: Grid, f: impl Fn(usize) -> f64) -> Self {
        let values = (0..grid.len()).map(f).collect();
        Self::new(grid, values).expect("from_fn_index produced a non-finite value")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GridError> {
        self.grid.same_as(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_vec_unchecked(self.grid, values))
    }

    /// Periodic multilinear interpolation at an arbitrary point.
    pub fn sample(&self, p: Point) -> f64 {
        interpolate(&self.grid, &self.values, p)
    }

    /// Cellwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self, GridError> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    /// Discrete inner product `sum f g h^dim`.
    pub fn dot(&self, other: &ScalarField) -> Result<f64, GridError> {
        self.grid.same_as(&other.grid)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }
}

/// `dim` real components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if components.len() != grid.dim() {
            return Err(GridError::BadDimension(components.len()));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(GridError::LengthMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFinite(i));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> Point) -> Self {
        let mut components = vec![Vec::with_capacity(grid.len()); grid.dim()];
        for i in 0..grid.len() {
            let v = f(grid.center(i));
            for (a, c) in components.iter_mut().enumerate() {
                c.push(v[a]);
            }
        }
        Self { grid, components }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn at(&self, idx: usize) -> Point {
        let mut v = [0.0; 2];
        for (a, c) in self.components.iter().enumerate() {
            v[a] = c[idx];
        }
        v
    }

    /// Periodic multilinear interpolation of every component.
    pub fn sample(&self, p: Point) -> Point {
        let mut v = [0.0; 2];
        for (a, c) in self.components.iter().enumerate() {
            v[a] = interpolate(&self.grid, c, p);
        }
        v
    }

    /// `max |v|` with the Euclidean norm per cell.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let v = self.at(i);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }

    /// `max sum_a |v_a|`, the speed that governs donor-cell stability.
    pub fn max_l1_speed(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|v| v * s).collect())
                .collect(),
        }
    }

    /// Applies a scalar operation to each component independently.
    pub fn map_components(
        &self,
        f: impl Fn(&ScalarField) -> Result<ScalarField, GridError>,
    ) -> Result<Self, GridError> {
        let components = self
            .components
            .iter()
            .map(|c| f(&ScalarField::from_vec_unchecked(self.grid, c.clone())).map(|s| s.values))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            grid: self.grid,
            components,
        })
    }
}

/// Cellwise boolean selection on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, cells: Vec<bool>) -> Result<Self, GridError> {
        if cells.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: cells.len(),
            });
        }
        Ok(Self { grid, cells })
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            cells: vec![true; grid.len()],
        }
    }

    /// Cells where `f > threshold`.
    pub fn above(f: &ScalarField, threshold: f64) -> Self {
        Self {
            grid: f.grid,
            cells: f.values.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> bool) -> Self {
        Self {
            grid,
            cells: (0..grid.len()).map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
    }

    pub fn and(&self, other: &Mask) -> Result<Self, GridError> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn not(&self) -> Self {
        Self {
            grid: self.grid,
            cells: self.cells.iter().map(|c| !c).collect(),
        }
    }

    /// Indicator field with values in {0, 1}.
    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.grid,
            self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Total measure `count * h^dim`.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }
}

/// Second-order centered differences with periodic wraparound.
pub fn central_gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid;
    let inv = 0.5 / grid.spacing();
    let components = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|i| {
                    let up = f.values[grid.shift(i, axis, 1)];
                    let down = f.values[grid.shift(i, axis, -1)];
                    (up - down) * inv
                })
                .collect()
        })
        .collect();
    VectorField { grid, components }
}

/// Largest stable donor-cell timestep for velocity `v`.
pub fn cfl_limit(v: &VectorField) -> f64 {
    let speed = v.max_l1_speed();
    if speed == 0.0 {
        f64::INFINITY
    } else {
        MAX_CFL * v.grid.spacing() / speed
    }
}

/// One donor-cell step of `f_t - v . Df = 0`.
///
/// The transport velocity is `-v`; with `sum_a |v_a| dt <= 0.9 h` every
/// output value is a convex combination of input values.
pub fn upwind_advect(f: &ScalarField, v: &VectorField, dt: f64) -> Result<ScalarField, GridError> {
    f.grid.same_as(&v.grid)?;
    let limit = cfl_limit(v);
    if dt > limit * (1.0 + 1e-12) || dt < 0.0 {
        return Err(GridError::CflViolation { dt, limit });
    }
    let grid = f.grid;
    let lambda = dt / grid.spacing();
    let values = (0..grid.len())
        .map(|i| {
            let fi = f.values[i];
            let mut out = fi;
            for axis in 0..grid.dim() {
                let c = -v.components[axis][i];
                if c > 0.0 {
                    out -= lambda * c * (fi - f.values[grid.shift(i, axis, -1)]);
                } else if c < 0.0 {
                    out -= lambda * c * (f.values[grid.shift(i, axis, 1)] - fi);
                }
            }
            out
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(grid, values))
}

/// Discrete `L^p` norm `(sum |f|^p h^dim)^(1/p)`, or the max for infinite
/// `p`, restricted to `mask` when given.
pub fn lp_norm(f: &ScalarField, p: f64, mask: Option<&Mask>) -> Result<f64, GridError> {
    if !(p >= 1.0) {
        return Err(GridError::BadExponent(p));
    }
    if let Some(m) = mask {
        f.grid.same_as(&m.grid)?;
        if m.is_empty() {
            return Err(GridError::EmptyMask);
        }
    }
    let selected = f
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m.cells[*i]))
        .map(|(_, v)| v.abs());
    if p.is_infinite() {
        return Ok(selected.fold(0.0, f64::max));
    }
    let sum: f64 = selected.map(|v| v.powf(p)).sum();
    Ok((sum * f.grid.cell_volume()).powf(1.0 / p))
}

/// Standard bump `exp(-1 / (1 - s^2))` on `|s| < 1`.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Discrete mollifier of radius `eps`: offsets (in cells) and weights summing
/// to one.
pub fn mollifier_kernel(grid: &Grid, eps: f64) -> Vec<([isize; 2], f64)> {
    let h = grid.spacing();
    let reach = (eps / h).floor() as isize;
    let ry = if grid.dim() == 1 { 0 } else { reach };
    let mut taps = Vec::new();
    for jy in -ry..=ry {
        for jx in -reach..=reach {
            let r = h * (jx as f64).hypot(jy as f64);
            let w = bump(r / eps);
            if w > 0.0 {
                taps.push(([jx, jy], w));
            }
        }
    }
    let mass: f64 = taps.iter().map(|(_, w)| w).sum();
    for t in &mut taps {
        t.1 /= mass;
    }
    taps
}

/// Convolution with a nonnegative mass-one bump of radius `eps`.
pub fn mollify_space(f: &ScalarField, eps: f64) -> Result<ScalarField, GridError> {
    let grid = f.grid;
    let h = grid.spacing();
    if eps < h * (1.0 - 1e-12) {
        return Err(GridError::RadiusTooSmall { eps, h });
    }
    let taps = mollifier_kernel(&grid, eps);
    let lo = f.min();
    let hi = f.max();
    let values = (0..grid.len())
        .map(|i| {
            let [ix, iy] = grid.axes(i);
            let s: f64 = taps
                .iter()
                .map(|([jx, jy], w)| {
                    w * f.values[grid.flat(ix as isize + jx, iy as isize + jy)]
                })
                .sum();
            s.clamp(lo, hi)
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(grid, values))
}
