use crate::{Error, Result};

/// Samples and wall time needed to fill one detector input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionCost {
    pub samples: u64,
    pub seconds: f64,
}

/// A 1D frame needs `fft_size` samples; a square spectrogram needs
/// `fft_size` such frames.
pub fn acquisition_cost(
    sample_rate_hz: f64,
    fft_size: usize,
    spectrogram: bool,
) -> Result<AcquisitionCost> {
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) || fft_size == 0 {
        return Err(Error::Config(format!(
            "sample rate ({sample_rate_hz}) and FFT size ({fft_size}) must be positive"
        )));
    }
    let n = fft_size as u64;
    let samples = if spectrogram { n * n } else { n };
    Ok(AcquisitionCost {
        samples,
        seconds: samples as f64 / sample_rate_hz,
    })
}
