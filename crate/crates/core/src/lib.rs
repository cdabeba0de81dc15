//! Precoder optimization for SWIPT-enabled multi-user MIMO cognitive-radio downlinks.
//!
//! A secondary base station with `M` antennas serves `K_I` information users
//! while keeping `K_E` energy-harvesting users above their energy thresholds
//! and `K_P` primary receivers below their interference thresholds.
//!
//! - [`metrics`]: per-user rates, harvested power, interference, sum utility.
//! - [`matops`]: Hermitian eigendecomposition, inverse square root, null spaces, DFT.
//! - [`ellipsoid`]: constrained subgradient ellipsoid maximizer used by every dual solve.
//! - [`energy`]: weighted harvested-energy maximization and the threshold feasibility check.
//! - [`mumimo`]: the WMMSE/dual-ellipsoid multi-user design (with zero-interference reduction).
//! - [`sumimo`]: the jointly optimal single-user design (max-rate and QoS weightings).

pub mod ellipsoid;
pub mod energy;
mod error;
pub mod matops;
pub mod metrics;
mod model;
pub mod mumimo;
mod scaling;
pub mod sumimo;

pub use error::{Error, Result};
pub use model::{
    CandidateTrace, ChannelSet, DualityCheck, NetworkScenario, Precoder, SolveReport,
    SolveStatus, UtilityKind,
};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
