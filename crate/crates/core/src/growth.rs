//! Pressure-dependent growth laws and the closed-form scalar facts used by
//! the solvers: the stable-root map `H = (Id - nu G)^{-1}`, the exact
//! logistic reaction step, the logistic barrier `omega`, and the analytic
//! moduli `sigma` and `theta_alpha`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Sample count used when validating slope bounds on `[0, P_M]`.
pub const VALIDATION_SAMPLES: usize = 1024;

/// Residual target of the root solve behind [`GrowthLaw::h_inverse`].
pub const H_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("invalid growth-law parameters: {0}")]
    InvalidParams(String),
    #[error("no sign change for u - nu G(u) - {w} on [0, {u_max}]")]
    NoBracket { w: f64, u_max: f64 },
    #[error("reaction sandwich violated at u = {u}, W = {w}: {lower} <= {value} <= {upper} fails")]
    BoundViolation {
        u: f64,
        w: f64,
        lower: f64,
        value: f64,
        upper: f64,
    },
    #[error("argument {0} outside the admissible range")]
    OutOfRange(f64),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Shape of `G` beyond the scalar parameters.
#[derive(Clone)]
pub enum GrowthShape {
    /// `G(p) = alpha (P_M - p)`.
    Linear,
    /// Monotone cubic Hermite interpolation of sampled `G` values.
    Table(MonotoneCubic),
    /// Arbitrary `G` and `G'` supplied as closures.
    Function { g: ScalarFn, g_prime: ScalarFn },
}

impl fmt::Debug for GrowthShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthShape::Linear => write!(f, "Linear"),
            GrowthShape::Table(t) => f.debug_tuple("Table").field(t).finish(),
            GrowthShape::Function { .. } => write!(f, "Function"),
        }
    }
}

/// A growth function `G` with `G' <= -alpha < 0` and `G(P_M) = 0`.
#[derive(Debug, Clone)]
pub struct GrowthLaw {
    alpha: f64,
    p_max: f64,
    nu: f64,
    shape: GrowthShape,
}

/// Frozen-potential logistic reaction `p' = k a p (1 - p / cap)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    /// `W + alpha P_M`.
    pub a: f64,
    /// `a / (1 + alpha)`.
    pub cap: f64,
    pub k: f64,
}

/// Lower bound, value, and upper bound of the reaction rate `u (W - u + G(u))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionBounds {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl GrowthLaw {
    /// The minimal admissible law `G(p) = alpha (P_M - p)`, with `nu = 1`.
    pub fn linear(alpha: f64, p_max: f64) -> Result<Self, GrowthError> {
        check_params(alpha, p_max)?;
        Ok(Self {
            alpha,
            p_max,
            nu: 1.0,
            shape: GrowthShape::Linear,
        })
    }

    /// Law interpolated from a table of `(p, G(p))` samples.
    pub fn from_table(
        alpha: f64,
        p_max: f64,
        nodes: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, GrowthError> {
        check_params(alpha, p_max)?;
        let table = MonotoneCubic::new(nodes, values)?;
        if table.nodes[0] > 0.0 || *table.nodes.last().unwrap() < p_max {
            return Err(GrowthError::InvalidParams(
                "table must cover [0, P_M]".into(),
            ));
        }
        let law = Self {
            alpha,
            p_max,
            nu: 1.0,
            shape: GrowthShape::Table(table),
        };
        law.validate()?;
        Ok(law)
    }

    /// Law given by closures for `G` and `G'`.
    pub fn from_fn(
        alpha: f64,
        p_max: f64,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, GrowthError> {
        check_params(alpha, p_max)?;
        let law = Self {
            alpha,
            p_max,
            nu: 1.0,
            shape: GrowthShape::Function {
                g: Arc::new(g),
                g_prime: Arc::new(g_prime),
            },
        };
        law.validate()?;
        Ok(law)
    }

    /// `G(p) = alpha (P_M - p)(1 + s (p - P_M)^2 / P_M^2)`: a nonlinear law
    /// with the same slope bound and root as the linear one.
    pub fn cubic_perturbed(alpha: f64, p_max: f64, s: f64) -> Result<Self, GrowthError> {
        if s < 0.0 {
            return Err(GrowthError::InvalidParams(format!("perturbation {s} < 0")));
        }
        let pm2 = p_max * p_max;
        Self::from_fn(
            alpha,
            p_max,
            move |p| alpha * (p_max - p) * (1.0 + s * (p - p_max).powi(2) / pm2),
            move |p| {
                let d = p - p_max;
                -alpha * (1.0 + 3.0 * s * d * d / pm2)
            },
        )
    }

    /// Viscosity constant of the pre-rescaled system.
    pub fn with_nu(mut self, nu: f64) -> Result<Self, GrowthError> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(GrowthError::InvalidParams(format!("nu = {nu} must be > 0")));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn shape(&self) -> &GrowthShape {
        &self.shape
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.shape, GrowthShape::Linear)
    }

    pub fn g(&self, p: f64) -> f64 {
        match &self.shape {
            GrowthShape::Linear => self.alpha * (self.p_max - p),
            GrowthShape::Table(t) => t.value(p),
            GrowthShape::Function { g, .. } => g(p),
        }
    }

    pub fn g_prime(&self, p: f64) -> f64 {
        match &self.shape {
            GrowthShape::Linear => -self.alpha,
            GrowthShape::Table(t) => t.derivative(p),
            GrowthShape::Function { g_prime, .. } => g_prime(p),
        }
    }

    /// Checks `G' <= -alpha` on a sample grid of `[0, P_M]`, `G(P_M) = 0`
    /// and `G(0) >= alpha P_M`.
    pub fn validate(&self) -> Result<(), GrowthError> {
        let slack = 1e-12 * self.alpha.max(1.0);
        for i in 0..VALIDATION_SAMPLES {
            let p = self.p_max * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let d = self.g_prime(p);
            if !(d <= -self.alpha + slack) {
                return Err(GrowthError::InvalidParams(format!(
                    "G'({p}) = {d} exceeds -alpha = {}",
                    -self.alpha
                )));
            }
        }
        let at_max = self.g(self.p_max);
        if at_max.abs() > 1e-12 {
            return Err(GrowthError::InvalidParams(format!("G(P_M) = {at_max} != 0")));
        }
        let at_zero = self.g(0.0);
        if at_zero < self.alpha * self.p_max - slack {
            return Err(GrowthError::InvalidParams(format!(
                "G(0) = {at_zero} < alpha P_M"
            )));
        }
        Ok(())
    }

    /// `u - nu G(u)`.
    pub fn id_minus_g(&self, u: f64) -> f64 {
        u - self.nu * self.g(u)
    }

    /// The unique `u` with `u - nu G(u) = w`.
    pub fn h_inverse(&self, w: f64) -> Result<f64, GrowthError> {
        if let GrowthShape::Linear = self.shape {
            let na = self.nu * self.alpha;
            return Ok((w + na * self.p_max) / (1.0 + na));
        }
        let u_max = w + self.nu * self.g(0.0) + 1.0;
        let f = |u: f64| self.id_minus_g(u) - w;
        let (mut lo, mut hi) = (0.0_f64, u_max);
        let (f_lo, f_hi) = (f(lo), f(hi));
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(GrowthError::NoBracket { w, u_max });
        }
        if f_lo == 0.0 {
            return Ok(lo);
        }
        let scale = 1.0 + w.abs();
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = f(u);
            if r.abs() <= H_RESIDUAL_TOL * scale {
                return Ok(u);
            }
            if r < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let slope = 1.0 - self.nu * self.g_prime(u);
            let newton = u - r / slope;
            u = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * scale {
                break;
            }
        }
        Ok(u)
    }

    /// Logistic parameters of the reaction at frozen potential `w`.
    pub fn logistic(&self, w: f64, k: f64) -> LogisticParams {
        let a = w + self.alpha * self.p_max;
        LogisticParams {
            a,
            cap: a / (1.0 + self.alpha),
            k,
        }
    }

    /// Solution of `omega_t = omega (alpha P_M - (1 + alpha) omega)` with
    /// `omega(0) = xi`.
    pub fn omega_exact(&self, xi: f64, t: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        let a = self.alpha * self.p_max;
        let b = 1.0 + self.alpha;
        a / (b + (a / xi - b) * (-a * t).exp())
    }

    /// Exact value at time `dt` of `p' = k p (W - p + G(p))` started from
    /// `p0`, with `W` frozen.
    ///
    /// For the linear law the equation is logistic and solved in closed
    /// form; other laws fall back to an adaptive embedded Runge-Kutta
    /// integration.
    pub fn exact_reaction_step(&self, p0: f64, w: f64, k: f64, dt: f64) -> f64 {
        if p0 <= 0.0 || dt == 0.0 {
            return p0.max(0.0);
        }
        if self.is_linear() {
            let LogisticParams { a, .. } = self.logistic(w, k);
            let b = 1.0 + self.alpha;
            let x = k * a * dt;
            let decay = (-x).exp();
            // (1 - e^{-k a dt}) / a, continuous through a = 0
            let growth = if a.abs() * k * dt < 1e-8 {
                k * dt
            } else {
                -(-x).exp_m1() / a
            };
            return p0 / (decay + b * p0 * growth);
        }
        let rhs = |p: f64| k * p * (w - p + self.g(p));
        dormand_prince(rhs, p0, dt).max(0.0)
    }

    /// Evaluates the reaction rate sandwich
    /// `u(alpha P_M - (1+alpha) u) <= u (W - u + G(u)) <= u (P_M + G(0))`.
    ///
    /// The upper bound equals `u (1 + alpha) P_M` for the linear law.
    pub fn reaction_bounds_check(&self, u: f64, w: f64) -> Result<ReactionBounds, GrowthError> {
        if !(0.0..=self.p_max).contains(&u) {
            return Err(GrowthError::OutOfRange(u));
        }
        if !(0.0..=self.p_max).contains(&w) {
            return Err(GrowthError::OutOfRange(w));
        }
        let lower = u * (self.alpha * self.p_max - (1.0 + self.alpha) * u);
        let value = u * (w - u + self.g(u));
        let upper = u * (self.p_max + self.g(0.0));
        let slack = 1e-12 * (1.0 + upper.abs());
        if lower > value + slack || value > upper + slack {
            return Err(GrowthError::BoundViolation {
                u,
                w,
                lower,
                value,
                upper,
            });
        }
        Ok(ReactionBounds {
            lower,
            value,
            upper,
        })
    }
}

fn check_params(alpha: f64, p_max: f64) -> Result<(), GrowthError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(GrowthError::InvalidParams(format!("alpha = {alpha} must be > 0")));
    }
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(GrowthError::InvalidParams(format!("P_M = {p_max} must be > 0")));
    }
    Ok(())
}

/// Adaptive Dormand-Prince 5(4) integration of a scalar autonomous ODE.
fn dormand_prince(f: impl Fn(f64) -> f64, y0: f64, t_end: f64) -> f64 {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let (rtol, atol) = (1e-11, 1e-14);
    let mut t = 0.0;
    let mut y = y0;
    let mut h = t_end / 16.0;
    while t < t_end {
        h = h.min(t_end - t);
        let mut k = [0.0; 7];
        k[0] = f(y);
        for s in 0..6 {
            let mut ys = y;
            for (j, c) in C[s].iter().enumerate().take(s + 1) {
                ys += h * c * k[j];
            }
            k[s + 1] = f(ys);
        }
        let y_new = y + h * C[5].iter().zip(&k).map(|(c, kk)| c * kk).sum::<f64>();
        let err = h * E.iter().zip(&k).map(|(e, kk)| e * kk).sum::<f64>();
        let scale = atol + rtol * y.abs().max(y_new.abs());
        let ratio = (err / scale).abs();
        if ratio <= 1.0 {
            t += h;
            y = y_new;
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    y
}

/// Fritsch-Carlson monotone cubic Hermite interpolant with linear
/// extrapolation beyond the end nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self, GrowthError> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(GrowthError::InvalidParams(
                "table needs at least two (p, G) pairs of equal length".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GrowthError::InvalidParams(
                "table nodes must be strictly increasing".into(),
            ));
        }
        let n = nodes.len();
        let secants: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            slopes[i] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
        }
        for i in 0..n - 1 {
            let d = secants[i];
            if d == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / d;
            let b = slopes[i + 1] / d;
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[i] = tau * a * d;
                slopes[i + 1] = tau * b * d;
            }
        }
        Ok(Self {
            nodes,
            values,
            slopes,
        })
    }

    fn segment(&self, x: f64) -> usize {
        match self.nodes.partition_point(|&n| n <= x) {
            0 => 0,
            i => (i - 1).min(self.nodes.len() - 2),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.values[0] + self.slopes[0] * (x - self.nodes[0]);
        }
        if x >= self.nodes[n - 1] {
            return self.values[n - 1] + self.slopes[n - 1] * (x - self.nodes[n - 1]);
        }
        let i = self.segment(x);
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.values[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.slopes[0];
        }
        if x >= self.nodes[n - 1] {
            return self.slopes[n - 1];
        }
        let i = self.segment(x);
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.values[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[i]
            + (-6.0 * t2 + 6.0 * t) / h * self.values[i + 1]
            + (3.0 * t2 - 2.0 * t) * self.slopes[i + 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Log-Lipschitz modulus `sigma(r) = N r |ln r|` on `[0, 1)`.
pub fn sigma_log_lipschitz(n: f64, r: f64) -> Result<f64, GrowthError> {
    if !(0.0..1.0).contains(&r) {
        return Err(GrowthError::OutOfRange(r));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(n * r * r.ln().abs())
}

fn theta_radius(alpha: f64, r: f64) -> Result<f64, GrowthError> {
    if !(alpha > 0.0) || r < 0.0 {
        return Err(GrowthError::OutOfRange(r));
    }
    let s = alpha.hypot(r);
    if s >= 1.0 {
        return Err(GrowthError::OutOfRange(s));
    }
    Ok(s)
}

/// Penalization `theta_alpha(r) = e^{-1/N} / (alpha |ln sqrt(alpha^2 + r^2)|)`.
pub fn theta_alpha(n: f64, alpha: f64, r: f64) -> Result<f64, GrowthError> {
    let s = theta_radius(alpha, r)?;
    Ok((-1.0 / n).exp() / (alpha * s.ln().abs()))
}

/// The solution `|ln s|^{-1/N} / alpha` of `G' = G / sigma` at
/// `s = sqrt(alpha^2 + r^2)`. The defining integral diverges at `s = 1`, so
/// the constant of integration is fixed to one here.
///
/// Proportional to [`theta_alpha`] only when `N = 1`, with ratio `e`.
pub fn theta_alpha_integral(n: f64, alpha: f64, r: f64) -> Result<f64, GrowthError> {
    let s = theta_radius(alpha, r)?;
    Ok(s.ln().abs().powf(-1.0 / n) / alpha)
}
