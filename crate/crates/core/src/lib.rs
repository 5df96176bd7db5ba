//! Isotropic Hilbert-valued Gaussian random fields on the d-sphere.
//!
//! The crate covers the whole path from covariance models to measure
//! equivalence:
//!
//! * [`harmonics`]: Gegenbauer polynomials, eigenspace dimensions and real
//!   orthonormal spherical harmonics.
//! * [`schoenberg`]: operator-valued Schoenberg sequences `{b_l}`, the kernels
//!   `R(t) = Σ b_l C_l^λ(t)` they induce, and the operator calculus used by the
//!   equivalence test.
//! * [`models`]: the multiquadratic bivariate family and the Legendre–Matérn
//!   operator family.
//! * [`equivalence`]: the functional Feldman–Hájek series, scalar
//!   marginalization and closed-form classifiers.
//! * [`simulate`]: truncated harmonic synthesis on S¹/S² and Monte Carlo
//!   covariance checks.

pub mod equivalence;
pub mod error;
pub mod harmonics;
pub mod models;
pub mod rng;
pub mod schoenberg;
pub mod simulate;

pub use error::{Error, Result};
pub use harmonics::{SphereDim, SpherePoint};
pub use schoenberg::{IsotropicKernel, SchoenbergOperator, SchoenbergSequence};
