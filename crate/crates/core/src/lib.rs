//! Simulation and analysis of time-resolved balanced homodyne detection.
//!
//! A single-mode quantum state occupies a temporal mode f₀(t). The mode is
//! completed to an orthonormal basis of the detector's time bins; each trace
//! weights f₀ with a quadrature drawn from the state's marginal and every
//! other basis mode with a draw from the background state. Projecting traces
//! back onto an analysis mode recovers quadratures, from which marginals,
//! similarity coefficients and maximum-likelihood reconstructions follow.

pub mod analysis;
pub mod error;
pub mod hermite;
pub mod io;
pub mod modes;
pub mod phase_space;
pub mod rng;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use modes::{complete_basis, make_mode, overlap, shift_mode, ModeBasis, ModeShape, TemporalMode, TimeGrid};
pub use phase_space::{build_cdf, marginal, sample_quadrature, wigner, MarginalDistribution, QuadratureGrid};
pub use sim::{simulate_ensemble, simulate_trace, EnsembleSpec, ErrorModel, ThetaSchedule, TraceEnsemble};
pub use state::{fidelity, Parity, QuantumState};
