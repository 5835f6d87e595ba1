//! Smooth transonic (Meyer-type) flow through symmetric planar de Laval
//! nozzles, solved in the potential-stream plane.
//!
//! The flow is split at the throat: a degenerate-elliptic subsonic-sonic
//! problem upstream of the sonic line, a singular-hyperbolic sonic-supersonic
//! problem downstream, joined into a single field whose speed has Lipschitz
//! first derivatives across the sonic line. Each side is closed by a damped
//! fixed-point iteration on its nonlocal wall/inlet boundary data.
//!
//! Crate layout:
//! - [`gas`]: the isentropic closure and every transformed speed function;
//! - [`nozzle`]: wall/inlet geometry, admissibility checks, boundary maps;
//! - [`subsonic`]: the convergent-side solver (relaxation + continuation);
//! - [`supersonic`]: the divergent-side solver (Riemann-invariant marching);
//! - [`assembly`]: joins the sides, rebuilds flow angle and physical
//!   coordinates;
//! - [`sonic_analysis`]: sonic-curve classification, characteristic tracing,
//!   invariant-drift and wall-curvature diagnostics;
//! - [`config`] / [`run`]: batch configuration and orchestration used by the
//!   `laval` binary and the examples.

pub mod assembly;
pub mod config;
pub mod gas;
pub mod nozzle;
pub mod numerics;
pub mod run;
pub mod sonic_analysis;
pub mod subsonic;
pub mod supersonic;

pub use gas::{GasError, GasModel};
pub use nozzle::{BoundaryMaps, NozzleSpec};

use thiserror::Error;

/// Crate-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Gas(#[from] gas::GasError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("solver diverged: {0}")]
    Divergence(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shared gamma = 1.4 model for the test suite (construction is nontrivial,
/// so tests share one instance per binary).
#[cfg(test)]
pub(crate) fn test_gas() -> &'static GasModel {
    static G: std::sync::OnceLock<GasModel> = std::sync::OnceLock::new();
    G.get_or_init(|| GasModel::new(1.4).expect("reference gas model"))
}
