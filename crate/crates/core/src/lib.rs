//! Numerical laboratory for one-dimensional ergodic Schrödinger operators
//!
//! ```text
//! (Hψ)(n) = λ⁻¹ (ψ(n−1) + ψ(n+1)) + V(n) ψ(n),   V(n) = f(Tⁿω)
//! ```
//!
//! at large coupling λ. The drivers `T` are the Chirikov standard map, the
//! skew shift, i.i.d. sequences and constant/periodic potentials. The crate
//! computes Lyapunov exponents from transfer-matrix cocycles, densities of
//! states from Sturm counts, the Thouless log-potential, fractional-moment
//! window bounds, exceptional-set bounds and the resonance integrals of the
//! standard map, and cross-checks them against one another.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod dos;
pub mod dynamics;
pub mod error;
pub mod lyapunov;
pub mod operator;
pub mod quad;
pub mod resonance;
pub mod rng;
pub mod thouless;
pub mod verify;

pub use error::{Error, Result};
