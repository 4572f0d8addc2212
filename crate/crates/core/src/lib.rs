//! Generalized filter functions and operational fidelities for piecewise-constant
//! single-qubit control under classical noise, with a Monte Carlo cross-check.
//!
//! Conventions: `ħ = 1`, the control propagator of a segment is
//! `exp(−iΩtσ_φ/2)`, and noise enters as `H₀ = β(t)·σ`. Power spectra are
//! two-sided with `C(t) = (1/2π)∫S(ω)e^{iωt}dω`.

pub mod dd;
pub mod error;
pub mod fidelity;
pub mod filter;
pub mod jet;
pub mod montecarlo;
pub mod noise;
pub mod quad;
pub mod schema;
pub mod sequence;
pub mod su2;

pub use error::{Error, Result};
