//! Conditional probability density `P[Y|X]` of the nonlinear Schrödinger
//! channel with additive white noise.
//!
//! Three routes to the density are provided and cross-checked against each
//! other:
//!
//! * [`pathint_mc`]: Monte-Carlo evaluation of the causal lattice path
//!   integral, with a brute-force quadrature oracle for tiny lattices;
//! * [`perturbative_pdf`]: closed forms at zeroth and first order in the
//!   Kerr coefficient;
//! * [`classical_trajectory`]: the small-noise saddle point, found by solving
//!   the minimum-action boundary-value problem.
//!
//! [`channel`] holds the forward stochastic integrator used as an empirical
//! oracle and [`qpsk`] the Gaussian-pulse QPSK worked example.

pub mod action;
pub mod channel;
pub mod classical_trajectory;
pub mod error;
pub mod exec;
pub mod grid;
pub mod pathint_mc;
pub mod perturbative_pdf;
pub mod qpsk;
pub mod quad;
pub mod rng;

pub use num_complex::Complex64;

pub use channel::{ChannelParams, DimensionlessDiagnostics};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{Grid, GridSpec, SpectralField};
pub use pathint_mc::{LogPdf, Method};

