//! Anomaly injection and on-device anomaly detection for in-home sensor
//! series.
//!
//! The crate covers the whole experimental loop: a synthetic home generator
//! ([`synth`]), anomaly injection with ground truth ([`inject`]), per-device
//! preprocessing ([`pipeline`]), a small neural predictor whose alarm
//! threshold is derived from its own training loss ([`detector`]), and the
//! repetition harness that scores it ([`evaluate`]).

pub mod detector;
pub mod domain;
pub mod error;
pub mod evaluate;
pub mod inject;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
