//! Spectrum sensing on 1D FFT frames.
//!
//! The crate covers the full pipeline:
//!
//! * [`dsp`]: complex-baseband primitives (modulation, pulse shaping,
//!   resampling, filtering, channel impairments, dB spectra).
//! * [`synth`]: randomized multi-transmitter scenes with ground-truth
//!   intervals, and the on-disk dataset format.
//! * [`geom`]: interval geometry shared by every detector (IoU, anchors,
//!   target assignment, box regression, NMS).
//! * [`nn`]: a small 1D neural-network kernel with hand-written backward
//!   passes and the Adam optimizer.
//! * [`frcnn`]: the 1D Faster R-CNN detector and its alternating trainer.
//! * [`energy`]: the classical noise-floor/hysteresis detector.
//! * [`metrics`]: mAP, mIoU, Pd, Pfa and timing normalization.
//! * [`amc`]: per-detection signal isolation and modulation classification.

pub mod amc;
pub mod dsp;
pub mod energy;
mod error;
pub mod frcnn;
pub mod geom;
pub mod metrics;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};

/// Default FFT frame length.
pub const FFT_SIZE: usize = 1024;

/// Default receiver sample rate in Hz.
pub const SAMPLE_RATE_HZ: f64 = 200_000.0;
