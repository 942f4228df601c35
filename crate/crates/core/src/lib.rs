//! Spectral simulator and certified decay rates for the one-dimensional
//! linearized BGK equation whose collision frequency `σ(z)` depends on an
//! uncertain parameter `z`.
//!
//! The perturbation `h(x, v, t, z)` is expanded in Fourier modes in `x` and
//! normalized Hermite functions in `v`. Each mode then obeys the linear ODE
//! `∂ₜ ĥ_k = −C_k ĥ_k` with `C_k = i k l 𝕃₁ + σ(z) 𝕃₂`, `l = 2π/L`.
//!
//! * [`spectral`]: truncated operators, generators, Hermite functions, quadrature.
//! * [`lyapunov`]: transform matrices `P_k`, the decay certificate and the
//!   matrix-inequality check `C_k* P_k + P_k C_k ≥ 2μ P_k`.
//! * [`propagator`]: exact exponential propagation of the solution and its
//!   `z`-derivatives, plus an RK4 reference integrator.
//! * [`models`]: collision-frequency models and initial-data projection.
//! * [`analysis`]: the entropy functional, decay envelopes and Gronwall bounds.
//! * [`experiment`]: configuration-driven runs that persist CSV results.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod lyapunov;
pub mod models;
pub mod propagator;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;

pub use nalgebra::Complex;

/// Complex scalar used for all coefficient vectors.
pub type C64 = Complex<f64>;
