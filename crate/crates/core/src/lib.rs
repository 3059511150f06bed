//! Estimation and verification tools for the exponential family of
//! exponentials of bounded-degree polynomials,
//!
//! ```text
//! p_theta(x) = exp(-sum_i x_i^(d+1) + <theta, T(x)>) / Z_theta,
//! ```
//!
//! where `T(x)` collects every monomial of degree `1..=d` in `n` variables.
//!
//! The crate is organised by subsystem:
//!
//! * [`polybasis`]: multi-indices, the monomial basis, sparse polynomials, Legendre bases.
//! * [`expfam`]: the density, its score, tensor Gauss-Legendre quadrature and moment bounds.
//! * [`sampler`]: exact separable sampling and MALA, with diagnostics.
//! * [`estimators`]: closed-form score matching, quadrature-backed MLE, convergence studies.
//! * [`fisher`]: Fisher information, restricted Poincare constants, spectral checks.
//! * [`hardness`]: DIMACS ingestion and the 3-SAT to density encoding with its experiments.
//! * [`cli`]: the `polyscore` command-line front end.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod expfam;
pub mod fisher;
pub mod hardness;
pub mod polybasis;
pub mod report;
pub mod sampler;

pub use error::{Error, Result};
