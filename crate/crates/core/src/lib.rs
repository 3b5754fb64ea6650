//! Link-level simulator and receiver library for on-off division multiple
//! access (ODMA) unsourced random access over MIMO block-fading channels.
//!
//! The transmitter side splits each user's message into a chunk index, a
//! pilot index, an on-off pattern index, and a polar-coded payload, and the
//! receiver recovers the user list per chunk with a probabilistic chain:
//! low-rank factorization of the received matrix, pilot-domain ambiguity
//! compensation, AMP-based joint pattern/data detection, CRC-aided polar
//! list decoding, and successive interference cancellation.
//!
//! All numeric code is generic over the real scalar type through the
//! [`Real`] trait (`f32` or `f64`); the crate root exposes concrete `f64`
//! aliases which the harness and CLI use.

pub mod bits;
pub mod channel;
pub mod codebooks;
pub mod config;
pub mod counters;
pub mod detection;
pub mod encoder;
pub mod error;
pub mod factorization;
pub mod fec;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod sic;

pub use error::Error;
pub use linalg::{CMat, CVec};
pub use scalar::Real;

/// Complex sample type over a generic real scalar.
pub type Cplx<T> = num_complex::Complex<T>;

/// Single-precision complex sample.
pub type C32 = num_complex::Complex<f32>;
/// Double-precision complex sample (default working precision).
pub type C64 = num_complex::Complex<f64>;

/// Default real scalar used by the harness and CLI.
pub type DefaultReal = f64;

/// Crate-wide result type.
pub type Result<V> = std::result::Result<V, Error>;
