//! Simulator and analytical toolkit for a two-hop MIMO relay broadcast
//! downlink with quantized CSI feedback.
//!
//! An M-antenna base station serves N single-antenna users through an
//! N-antenna amplify-and-forward relay. The source precoder comes from the
//! SVD of the first-hop channel and the relay precoder combines the SVD
//! receive matrix with zero-forcing beamforming on the second hop. Channel
//! directions cross the feedback links as random-vector-quantization (RVQ)
//! indices: B1 bits per precoder column on hop one, B2 bits per user channel
//! on hop two.
//!
//! The crate provides:
//! - [`cmatrix`]: dense complex linear algebra and seeded random sampling
//!   for the small matrices involved (dimensions up to ~8),
//! - [`quantizer`]: RVQ codebooks and the chordal-distance quantization rule,
//! - [`precoder`]: construction of the structured precoders and power scalars
//!   under perfect or quantized CSI,
//! - [`ratesim`]: per-realization SINR evaluation and Monte Carlo estimation
//!   of ergodic sum rates and rate loss,
//! - [`bounds`]: closed-form rate-loss bounds, interference-limited rate
//!   ceilings, and the feedback-bit scaling laws,
//! - [`scenario`]: config parsing, sweep execution, CSV emission, and the
//!   figure presets exposed by the command-line binary.
//!
//! All randomness flows through [`cmatrix::RngStream`] values keyed by
//! `(seed, stream_id)`, so every estimate is reproducible bit-for-bit across
//! runs and thread counts.

pub mod bounds;
pub mod cmatrix;
pub mod precoder;
pub mod quantizer;
pub mod ratesim;
pub mod scenario;

mod error;

pub use error::{SimError, SimResult};
