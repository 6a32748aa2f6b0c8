//! Finite-k Brinkman tumor growth, its incompressible limit, and a harness
//! comparing the two.
//!
//! Solvers work in the rescaled variables with unit viscosity. The finite-k
//! pressure obeys `p_t - Dp . DW = k p (W - p + G(p))` with
//! `-Lap W + W = p`; the limit is a region carried by `-DW` on which
//! `p = H(W)`, `H = (Id - G)^{-1}`.

pub mod config;
pub mod elliptic;
pub mod flow;
pub mod grid;
pub mod growth;
pub mod harness;
pub mod io;
pub mod klevel;
pub mod limit;
pub mod patch;
pub mod selftest;

pub use config::RunConfig;
pub use elliptic::{solve_brinkman, EllipticMethod, EllipticSolver};
pub use grid::{Grid, Mask, ScalarField, VectorField};
pub use growth::GrowthLaw;
pub use harness::{convergence_sweep, ConvergenceReport, ReportRow};
pub use klevel::{run_klevel, KLevelConfig, KLevelState};
pub use limit::{run_limit, LimitConfig, LimitState};
pub use patch::PatchShape;
