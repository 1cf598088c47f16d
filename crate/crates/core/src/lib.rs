//! Numerical toolkit for Toeplitz quantization on Kähler models.
//!
//! The crate builds finite-dimensional Toeplitz Hamiltonians on three exactly
//! controllable model spaces (truncated Bargmann-Fock, radial Bergman on C,
//! and CP^1 spin spaces), computes pointwise spectral measures, and compares
//! them against the periodic-orbit predictions: smoothed Weyl expansions,
//! the Q-function, and the two-term sharp counting law.
//!
//! Conventions used throughout:
//! * Kähler form `ω = i Σ dz_j ∧ dz̄_j` (equal to `2 Σ dx_j ∧ dy_j` in real
//!   chart coordinates), with potential `φ(z) = |z|^2 + ...`.
//! * Symplecticity residuals are measured against the unit form
//!   `Ω = [[0, I], [-I, 0]]` (scale-invariant, so compatible with the above).
//! * Fourier transform pair `f̂(x) = (2π)^{-1} ∫ f(t) e^{-itx} dt`,
//!   `f(t) = ∫ f̂(x) e^{itx} dx`.

pub mod config;
pub mod error;
pub mod flow;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod poly;
pub mod quad;
pub mod quantize;
pub mod report;
pub mod symplectic;
pub mod tauberian;
pub mod weyl;

pub use error::{Error, Result};
