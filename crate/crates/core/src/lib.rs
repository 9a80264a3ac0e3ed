//! Synthesis of half-wave symmetric staircase signals with prescribed
//! Fourier coefficients.
//!
//! The selected coefficients of a control `u: [0, π) → [-1, 1]` are the
//! terminal state of a linear system driven by `u`. Steering that system to
//! the origin while paying a convex piecewise-affine price for the control
//! value yields staircase optimal controls whose waveform and switch count
//! fall out of the optimization instead of being fixed in advance.
//!
//! Modules:
//! - [`signal`]: staircase signals, closed-form and quadrature Fourier
//!   coefficients, the staircase predicate.
//! - [`dynamics`]: harmonic basis, the exact terminal map and explicit Euler.
//! - [`penalty`]: parabola interpolants, slopes, the smooth surrogate and the
//!   pointwise Hamiltonian minimizer.
//! - [`solver`]: the discretized problem, a proximal point solver with a
//!   gradient polish, staircase extraction and Pontryagin-based checks.
//! - [`baseline`]: fixed-waveform switching-angle optimization.
//! - [`sweep`]: policy maps over the modulation index.
//! - [`problem`]: run configuration and shipped presets.

pub mod baseline;
pub mod dynamics;
mod error;
pub mod penalty;
pub mod problem;
pub mod signal;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
