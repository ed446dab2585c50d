//! Waveform-level WDM fiber transmission simulator and DSP-assisted
//! evaluation of fiber-channel surrogate models.

pub mod config;
pub mod dataset;
pub mod error;
pub mod field;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod prng;
pub mod rx;
pub mod spectral;
pub mod ssfm;
pub mod symbols;
pub mod tx;
pub mod units;
pub mod wfld;

pub use error::{Error, ErrorClass, Result};
pub use field::DualPolField;
pub use params::{EdfaParams, FiberSpanParams, LinkConfig, SpanConfig, WdmConfig};
pub use prng::{PrngAlgorithm, PrngSpec};
pub use symbols::{DualPolSymbols, RxSymbols, SymbolStream};
