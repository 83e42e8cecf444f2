//! Finite-range multiscale decomposition of lattice Green's functions.
//!
//! The lattice resolvent `G^a = (-Δ_ε + a)^{-1}` on a spacing-`ε` lattice is
//! split into a sum of *fluctuation covariances*: positive definite,
//! translation invariant kernels that vanish identically beyond a fixed
//! radius. The construction subtracts from `G^a` its image under a smoothing
//! operator built from mollified Poisson-kernel averages over cubes, once per
//! dyadic scale. Rescaled to the unit lattice the pieces reassemble `G^a`
//! exactly, and the sequence of rescaled covariances converges to a continuum
//! limit at rate `L^{-n/2}`.
//!
//! Module layout follows the pipeline:
//!
//! * [`lattice`]: torus grids, cubes with boundaries, forward differences,
//!   Fourier transforms (a general complex path and a fast path for
//!   reflection-symmetric kernels).
//! * [`resolvent`]: lattice/continuum Laplacian symbols and Green's
//!   functions, plus a quadrature evaluator for the infinite-lattice
//!   resolvent used as an independent reference.
//! * [`dirichlet`]: the cube Dirichlet problem and Poisson kernel tables.
//! * [`averaging`]: the mollifier family and the averaging operators
//!   `A^a_{ε,m}` with their Fourier symbols.
//! * [`fluctuation`]: fluctuation covariances, the multiscale decomposition
//!   and its reconstruction identity.
//! * [`levy`]: Lévy (fractional Laplacian) covariances via quadrature over
//!   the resolvent parameter.
//! * [`analysis`]: lattice Sobolev/sup norms, restriction to comparison
//!   grids, convergence-rate fits and symbol diagnostics.

pub mod analysis;
pub mod averaging;
pub mod dirichlet;
pub mod fluctuation;
pub mod lattice;
pub mod levy;
pub mod quad;
pub mod resolvent;
pub mod special;

use thiserror::Error;

/// Errors shared across the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scale indices: m={m}, n={n}, n_max={n_max}")]
    InvalidScale { m: u32, n: u32, n_max: u32 },

    #[error("dimension {0} requires the explicit low-dimension override (paper assumes d >= 3)")]
    DimensionTooLow(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero mode: massless symbol is singular at p = 0 (a = 0)")]
    ZeroMode,

    #[error("mollifier support contains no lattice point at this spacing")]
    DegenerateSupport,

    #[error("poisson table is missing source {0:?}")]
    MissingSource(Vec<i64>),

    #[error("source {0:?} is not strictly interior to the cube")]
    SourceNotInterior(Vec<i64>),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("cube of edge {edge} has no interior on the spacing-{eps} lattice")]
    EmptyCube { edge: f64, eps: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
