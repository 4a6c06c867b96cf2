//! Complex-baseband signal primitives.
//!
//! Everything here is a pure function of its inputs plus, where noise is
//! involved, an explicit caller-owned random generator.

mod channel;
mod filter;
mod modulation;
mod resample;
mod spectrum;

pub use channel::{awgn, normalize_power, rician_channel, RicianConfig};
pub use filter::{apply_fir, design_lowpass, lowpass_prototype, FirFilter, DEFAULT_LOWPASS_TAPS};
pub use modulation::{modulate, pulse_shape, raised_cosine_taps, Modulation};
pub use resample::resample;
pub use spectrum::{fft_db, frequency_shift, SpectrumFrame, DB_FLOOR};

use num_complex::Complex64;

use crate::{Error, Result};

/// Complex baseband sample.
pub type ComplexSample = Complex64;

/// A block of complex time-domain samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandFrame {
    samples: Vec<ComplexSample>,
    sample_rate_hz: f64,
}

impl BasebandFrame {
    pub fn new(samples: Vec<ComplexSample>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("baseband frame must not be empty".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[ComplexSample] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<ComplexSample> {
        self.samples
    }

    /// Mean power `(1/N) Σ |x|²`.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub(crate) fn with_samples(&self, samples: Vec<ComplexSample>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn mean_power(x: &[ComplexSample]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Symmetric Hamming window of length `n`.
pub(crate) fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / m).cos())
        .collect()
}
