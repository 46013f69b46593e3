//! Asymptotic expansions of planar orthogonal polynomials with weights
//! `exp(-2mQ)`, computed in circle coordinates.
//!
//! The crate is organized bottom-up:
//!
//! * [`polar_series`] — truncated bivariate Laurent series `c_{jk} z^j wbar^k`
//!   (the "polarized" algebra on annular neighborhoods of the unit circle),
//!   with Weierstrass division by `1 - z*wbar` and scale-aware sup norms.
//! * [`circle_ops`] — Hardy projections, the exterior Herglotz transform,
//!   harmonic extension, and the smoothing quotient on the circle.
//! * [`potential`] — droplet geometry (conformal map, bounded analytic
//!   completion of the potential) and the circle-coordinate data
//!   `R, Rhat, H_R, W_R, a1, B0`.
//! * [`expansion`] — the operator hierarchy `L`, `T`, the truncated Neumann
//!   series `B≈` with the `κ*(m)` rule, assembly of `A≈`/`F≈`, residual
//!   diagnostics, and pointwise evaluation of `P≈` and `Ψ≈`.
//! * [`oracle`] — arbitrary-precision moment-matrix orthogonal polynomials,
//!   Cauchy potentials, and comparison reports.

pub mod circle_ops;
pub mod expansion;
pub mod oracle;
pub mod polar_series;
pub mod potential;

pub use circle_ops::HardySplit;
pub use expansion::{build_expansion, ExpansionArtifacts, Residuals};
pub use oracle::{OracleResult, QuadratureScheme};
pub use polar_series::{AnnulusSpec, CircleSeries, ContactSeries, PolarizedSeries, CONTACT_EXT_DEPTH};
pub use potential::{DropletGeometry, PotentialModel};

/// Complex double shorthand used throughout the coefficient algebra.
pub type C64 = num_complex::Complex64;

/// Unified error type for the numerical pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scale error: {0}")]
    Scale(String),
    #[error("not divisible by 1 - z*wbar: diagonal defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotDivisible { defect: f64, tol: f64 },
    #[error("insufficient degree N: reconstruction error {err:.3e} above {tol:.3e}")]
    InsufficientDegree { err: f64, tol: f64 },
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("order budget exceeded: {0}")]
    OrderBudget(String),
    #[error("precision escalation requested: {0}")]
    Precision(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
