//! Angle, delay and Doppler estimation for AFDM integrated sensing with mixed
//! near-field and far-field targets.
//!
//! The pipeline synthesizes the received `G x N x K` DAF-domain cube, applies
//! spatial smoothing and a Vandermonde-structured CP decomposition, then reads
//! AoD from the transmit generators, AoA from a Toeplitz/propagator search and
//! delay/Doppler from pulse compression followed by golden-section refinement.
//! Cramér-Rao bounds are available for every parameter.

pub mod cpd;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod scene;
pub mod tensor;
pub mod waveform;

pub use error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
