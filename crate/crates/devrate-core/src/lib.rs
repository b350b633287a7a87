//! Numerical toolkit for long-time fluctuation statistics of ergodic diffusions.
//!
//! The crate is organised around one pipeline:
//!
//! * [`model`] describes a diffusion dX = b dt + sigma dB through evaluable
//!   fields with analytic derivatives (overdamped gradient flows, their
//!   nonequilibrium perturbations, and underdamped Langevin dynamics);
//! * [`lyapunov`] certifies confinement: exponential envelopes W = exp(theta V),
//!   the effective potential -LW/W, growth-exponent fits and admissibility of
//!   unbounded observables;
//! * [`grid`] turns the generator into a sparse M-matrix on a tensor mesh;
//! * [`spectral`] computes principal eigenpairs of tilted generators, stationary
//!   vectors and decay diagnostics by power iteration;
//! * [`scgf`] evaluates the scaled cumulant generating function lambda(theta)
//!   three independent ways (spectral, naive Monte Carlo, cloning);
//! * [`ratefn`] passes to rate functions: Legendre duality and the
//!   occupation-measure variational form;
//! * [`decompose`] splits the occupation rate function into its symmetric
//!   (gradient) and antisymmetric (circulation) parts, including the friction
//!   sweep for Langevin dynamics.
//!
//! Everything downstream of [`model`] is deterministic given a seed; stochastic
//! routines draw one counter-based stream per replica so results do not depend
//! on thread scheduling.

pub mod decompose;
pub mod expr;
pub mod field;
pub mod grid;
pub mod lyapunov;
pub mod model;
pub mod ratefn;
pub mod scgf;
pub mod sparse;
pub mod spectral;

use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the numerical
/// contracts rather than implementation details.
#[derive(Debug, Error)]
pub enum DevrateError {
    #[error("expression error: {0}")]
    Expr(String),
    #[error("derivative unavailable: {0}")]
    DerivativeUnavailable(String),
    #[error("nonequilibrium force not divergence-free against exp(-V): max residual {residual:.3e} at probe {probe:?}")]
    InvalidNonequilibriumForce { residual: f64, probe: Vec<f64> },
    #[error("invalid Lyapunov data: {0}")]
    InvalidLyapunov(String),
    #[error("parameter outside the supported regime: {0}")]
    OutOfTheory(String),
    #[error("growth-fit window too short: {points} radii (need at least 4)")]
    InsufficientWindow { points: usize },
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("unsupported diffusion structure: {0}")]
    UnsupportedDiffusion(String),
    #[error("measure error: {0}")]
    Measure(String),
    #[error("eigensolver failed to converge: residual {residual:.3e} after {iterations} iterations")]
    Convergence { iterations: usize, residual: f64 },
    #[error("positivity violated in Perron vector at node {index} (value {value:.3e})")]
    Positivity { index: usize, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("curve fails convexity at theta = {theta:.6}: midpoint defect {defect:.3e}")]
    Convexity { theta: f64, defect: f64 },
    #[error("perturbation inconsistent with the reference measure: compatibility defect {defect:.3e} exceeds {tolerance:.3e}")]
    IncompatibleRhs { defect: f64, tolerance: f64 },
    #[error("linear solver stalled: residual {residual:.3e} after {iterations} iterations")]
    LinearSolver { iterations: usize, residual: f64 },
    #[error("numeric range exceeded: {0}")]
    NumericRange(String),
    #[error("population degenerate: effective sample size {ess:.2}; shorten the resampling epoch")]
    Degeneracy { ess: f64 },
    #[error("trajectory left the safety box at t = {time:.3} (|x| > {limit:.1e})")]
    BlowUp { time: f64, limit: f64 },
    #[error("empty candidate family")]
    EmptyFamily,
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DevrateError>;
