//! Exact Euler characteristic transforms (ECT/ECC/SECT) of embedded
//! one-dimensional CW complexes, closed-form stability and interpolation
//! bounds, and a Gaussian-process smoothing estimator for curves observed
//! through independent ambient noise.
//!
//! The crate is organised around five modules:
//!
//! * [`complex`] — combinatorial one-dimensional CW complexes and their
//!   piecewise-linear embeddings into R^d, plus direction-set generation.
//! * [`ect`] — the exact ECT engine: per-direction Euler characteristic
//!   curves as integer step functions, smoothed transforms, and exact
//!   L1/sup norms, together with a brute-force sublevel-set oracle.
//! * [`bounds`] — closed-form evaluators for the stability, interpolation,
//!   chord and variation bounds that control how far two transforms can
//!   drift apart.
//! * [`gp`] — Gaussian-process regression with analytic kernel derivatives
//!   (posterior mean/variance, derivative posteriors, sampling).
//! * [`pipeline`] — the end-to-end estimator: Fourier test curves, noisy
//!   sampling, per-coordinate smoothing, constant-velocity
//!   reparameterization, discretization, and the batch experiment driver.

pub mod bounds;
pub mod complex;
pub mod ect;
mod geometry;
pub mod gp;
pub mod pipeline;
