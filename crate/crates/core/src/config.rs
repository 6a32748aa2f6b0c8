//! TOML run configuration.
//!
//! Sections are flat tables; lists are flat arrays. Unknown keys are
//! rejected. `[grid]`, `[law]` and `[omega0]` are always required, the
//! solver sections only by the commands that use them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{EllipticMethod, EllipticSolver, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::grid::{Grid, MAX_CFL};
use crate::growth::GrowthLaw;
use crate::harness::SweepSetup;
use crate::klevel::{Advection, InitialProfile, KLevelConfig};
use crate::limit::LimitConfig;
use crate::patch::PatchShape;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("missing section [{0}]")]
    Missing(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output: OutputSection,
    pub grid: GridSection,
    pub law: LawSection,
    pub omega0: Omega0Section,
    #[serde(default)]
    pub elliptic: EllipticSection,
    pub klevel: Option<KLevelSection>,
    pub limit: Option<LimitSection>,
    pub harness: Option<HarnessSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub seed: u64,
    /// Write binary field dumps next to the CSV summaries.
    #[serde(default = "yes")]
    pub dumps: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            seed: 0,
            dumps: true,
        }
    }
}

fn default_dir() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub extent: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSection {
    /// `linear` or `custom-table`.
    #[serde(default = "default_law_kind")]
    pub kind: String,
    pub alpha: f64,
    pub p_max: f64,
    #[serde(default = "one")]
    pub nu: f64,
    /// Pressure samples of a `custom-table` law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
    /// `G` at `nodes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

fn default_law_kind() -> String {
    "linear".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Omega0Section {
    /// `ball`, `balls`, `annulus` or `empty`.
    pub shape: String,
    /// Flat list with `dim` coordinates per center.
    #[serde(default)]
    pub centers: Vec<f64>,
    /// One radius per ball; `[inner, outer]` for an annulus.
    #[serde(default)]
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticSection {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for EllipticSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_method() -> String {
    "spectral".into()
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KLevelSection {
    pub k: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_dt")]
    pub max_dt: f64,
    /// Plateau of the initial pressure; defaults to `0.2 p_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// `smooth` or `limit`.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// `semi-lagrangian` or `upwind`.
    #[serde(default = "default_advection")]
    pub advection: String,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_cfl() -> f64 {
    MAX_CFL
}

fn default_max_dt() -> f64 {
    0.005
}

fn default_profile() -> String {
    "smooth".into()
}

fn default_advection() -> String {
    "semi-lagrangian".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_dt")]
    pub max_dt: f64,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default)]
    pub mollify_eps: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_fp_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    #[serde(default)]
    pub ks: Vec<f64>,
    #[serde(default)]
    pub times: Vec<f64>,
    /// Band half-width; defaults to a tenth of the diameter of `Omega_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_p_norm")]
    pub p_norm: f64,
    /// Positivity threshold relative to `p_max`.
    #[serde(default = "default_tol_pos")]
    pub tol_pos: f64,
    /// Relative slack of the monotonicity check.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_p_norm() -> f64 {
    2.0
}

fn default_tol_pos() -> f64 {
    1e-3
}

fn default_slack() -> f64 {
    0.1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid.dim, self.grid.extent, self.grid.n_cells).map_err(invalid)
    }

    pub fn law(&self) -> Result<GrowthLaw, ConfigError> {
        let l = &self.law;
        let law = match l.kind.as_str() {
            "linear" => {
                if l.nodes.is_some() || l.values.is_some() {
                    return Err(invalid("a linear law takes no table"));
                }
                GrowthLaw::linear(l.alpha, l.p_max)
            }
            "custom-table" => match (&l.nodes, &l.values) {
                (Some(n), Some(v)) => GrowthLaw::from_table(l.alpha, l.p_max, n.clone(), v.clone()),
                _ => return Err(invalid("custom-table law needs nodes and values")),
            },
            other => return Err(invalid(format!("unknown law kind '{other}'"))),
        }
        .map_err(invalid)?;
        law.with_nu(l.nu).map_err(invalid)
    }

    pub fn omega0(&self) -> Result<PatchShape, ConfigError> {
        let dim = self.grid.dim;
        let o = &self.omega0;
        let point = |chunk: &[f64]| [chunk[0], if dim == 2 { chunk[1] } else { 0.0 }];
        if !o.centers.len().is_multiple_of(dim.max(1)) {
            return Err(invalid(format!("centers must hold {dim} coordinates per center")));
        }
        let centers: Vec<_> = o.centers.chunks(dim.max(1)).map(point).collect();
        if o.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("radii must be positive"));
        }
        match o.shape.as_str() {
            "empty" => Ok(PatchShape::Empty),
            "ball" => match (centers.as_slice(), o.radii.as_slice()) {
                ([c], [r]) => Ok(PatchShape::Ball {
                    center: *c,
                    radius: *r,
                }),
                _ => Err(invalid("ball needs one center and one radius")),
            },
            "balls" => {
                if centers.len() != o.radii.len() || centers.is_empty() {
                    return Err(invalid("balls needs matching nonempty centers and radii"));
                }
                Ok(PatchShape::Balls(centers.into_iter().zip(o.radii.iter().copied()).collect()))
            }
            "annulus" => match (centers.as_slice(), o.radii.as_slice()) {
                ([c], [inner, outer]) if inner < outer => Ok(PatchShape::Annulus {
                    center: *c,
                    inner: *inner,
                    outer: *outer,
                }),
                _ => Err(invalid("annulus needs one center and radii [inner, outer]")),
            },
            other => Err(invalid(format!("unknown shape '{other}'"))),
        }
    }

    pub fn elliptic(&self) -> Result<EllipticSolver, ConfigError> {
        let e = &self.elliptic;
        let method: EllipticMethod = e.method.parse().map_err(invalid)?;
        let mut solver = EllipticSolver::new(method, 1.0, e.tol);
        solver.max_iter = e.max_iter;
        if !(1e-13..=1e-6).contains(&e.tol) {
            return Err(invalid(format!("elliptic.tol {} outside [1e-13, 1e-6]", e.tol)));
        }
        Ok(solver)
    }

    fn rescaled_law(&self) -> Result<GrowthLaw, ConfigError> {
        let law = self.law()?;
        if law.nu() != 1.0 {
            return Err(invalid("solvers use the rescaled system, law.nu must be 1"));
        }
        Ok(law)
    }

    pub fn klevel_config(&self) -> Result<(KLevelConfig, Vec<f64>), ConfigError> {
        let s = self.klevel.as_ref().ok_or(ConfigError::Missing("klevel"))?;
        let law = self.rescaled_law()?;
        let mut cfg = KLevelConfig::new(self.grid()?, law, self.omega0()?, s.k, s.t_end);
        cfg.cfl = s.cfl;
        cfg.max_dt = s.max_dt;
        if let Some(a) = s.amplitude {
            cfg.amplitude = a;
        }
        cfg.profile = s.profile.parse::<InitialProfile>().map_err(invalid)?;
        cfg.advection = s.advection.parse::<Advection>().map_err(invalid)?;
        cfg.elliptic = self.elliptic()?;
        cfg.validate().map_err(invalid)?;
        Ok((cfg, s.snapshot_times.clone()))
    }

    pub fn limit_config(&self) -> Result<(LimitConfig, Vec<f64>), ConfigError> {
        let s = self.limit.as_ref().ok_or(ConfigError::Missing("limit"))?;
        let law = self.rescaled_law()?;
        let mut cfg = LimitConfig::new(self.grid()?, law, self.omega0()?, s.t_end);
        cfg.cfl = s.cfl;
        cfg.max_dt = s.max_dt;
        cfg.fp_tol = s.fp_tol;
        cfg.mollify_eps = s.mollify_eps;
        cfg.elliptic = self.elliptic()?;
        if !(s.t_end >= 0.0 && s.cfl > 0.0 && s.max_dt > 0.0 && s.fp_tol > 0.0) {
            return Err(invalid("limit needs t_end >= 0 and positive cfl, max_dt, fp_tol"));
        }
        Ok((cfg, s.snapshot_times.clone()))
    }

    /// Sweep setup plus the `[harness]` section with its defaults resolved.
    pub fn sweep_setup(&self) -> Result<(SweepSetup, HarnessSection), ConfigError> {
        let mut h = self.harness.clone().ok_or(ConfigError::Missing("harness"))?;
        let (klevel, _) = self.klevel_config()?;
        let (limit, _) = self.limit_config()?;
        if h.delta.is_none() {
            h.delta = Some(0.1 * self.omega0()?.diameter());
        }
        if !(h.p_norm >= 1.0) || !(h.tol_pos > 0.0) || !(h.slack >= 0.0) {
            return Err(invalid("harness needs p_norm >= 1, tol_pos > 0, slack >= 0"));
        }
        let tol_pos = h.tol_pos * klevel.law.p_max();
        Ok((
            SweepSetup {
                klevel,
                limit,
                p_norm: h.p_norm,
                tol_pos,
            },
            h,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
[output]
dir = "out"
seed = 7

[grid]
dim = 1
extent = 8.0
n_cells = 256

[law]
kind = "linear"
alpha = 1.0
p_max = 1.0

[omega0]
shape = "ball"
centers = [4.0]
radii = [1.0]

[klevel]
k = 80.0
t_end = 0.25

[limit]
t_end = 0.25

[harness]
ks = [20.0, 80.0]
times = [0.25]
"#;

    #[test]
    fn demo_parses_and_round_trips() {
        let cfg = RunConfig::from_toml(DEMO).unwrap();
        assert_eq!(cfg.output.seed, 7);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        let (k, times) = cfg.klevel_config().unwrap();
        assert_eq!(k.k, 80.0);
        assert!(times.is_empty());
        assert_eq!(k.amplitude, 0.2);
        let (_, h) = cfg.sweep_setup().unwrap();
        assert!((h.delta.unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = DEMO.replace("seed = 7", "seed = 7\ncolour = 1");
        assert!(matches!(RunConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn missing_section_reported() {
        let text = DEMO.replace("[limit]\nt_end = 0.25\n", "");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.limit_config(), Err(ConfigError::Missing("limit"))));
    }

    #[test]
    fn shapes() {
        let mut cfg = RunConfig::from_toml(DEMO).unwrap();
        cfg.omega0 = Omega0Section {
            shape: "annulus".into(),
            centers: vec![4.0],
            radii: vec![0.5, 1.0],
        };
        assert!(matches!(cfg.omega0().unwrap(), PatchShape::Annulus { .. }));
        cfg.omega0.radii = vec![1.0, 0.5];
        assert!(cfg.omega0().is_err());
        cfg.omega0.shape = "triangle".into();
        assert!(cfg.omega0().is_err());
    }

    #[test]
    fn non_unit_viscosity_rejected_by_solvers() {
        let text = DEMO.replace("p_max = 1.0", "p_max = 1.0\nnu = 2.0");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.law().unwrap().nu(), 2.0);
        assert!(cfg.klevel_config().is_err());
    }
}
