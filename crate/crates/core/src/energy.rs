//! Noise-floor thresholding with a hysteresis scan: the classical baseline.

use crate::dsp::SpectrumFrame;
use crate::geom::{Detection, Interval};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyDetectorConfig {
    /// Consecutive bins at or below the threshold that end a signal.
    pub hysteresis_count: usize,
    /// Narrower excursions are discarded.
    pub min_width_bins: usize,
}

impl Default for EnergyDetectorConfig {
    fn default() -> Self {
        Self {
            hysteresis_count: 5,
            min_width_bins: 2,
        }
    }
}

impl EnergyDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hysteresis_count == 0 {
            return Err(Error::Config("hysteresis count must be at least 1".into()));
        }
        Ok(())
    }
}

/// `γ = μ + σ` over the frame's dB values (population standard deviation).
pub fn noise_threshold(spectrum: &SpectrumFrame) -> f64 {
    let bins = spectrum.bins();
    let n = bins.len() as f64;
    let mean = bins.iter().map(|&b| b as f64).sum::<f64>() / n;
    let var = bins.iter().map(|&b| (b as f64 - mean).powi(2)).sum::<f64>() / n;
    mean + var.sqrt()
}

/// Scans left to right: a bin above `γ` opens a signal, which closes once
/// `hysteresis_count` consecutive bins fall to or below `γ`. The closing
/// run is not part of the interval. Every detection has score 1.
pub fn energy_detect(
    spectrum: &SpectrumFrame,
    cfg: &EnergyDetectorConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let gamma = noise_threshold(spectrum);
    let mut out = Vec::new();
    let mut emit = |start: usize, end: usize| {
        if end - start >= cfg.min_width_bins.max(1) {
            let iv = Interval::new(start as f64, end as f64).expect("start < end");
            out.push(Detection::new(iv, 0, 1.0));
        }
    };
    // (start, one past the last bin above γ, current run of quiet bins)
    let mut open: Option<(usize, usize, usize)> = None;
    for (i, &b) in spectrum.bins().iter().enumerate() {
        let above = b as f64 > gamma;
        open = match (open, above) {
            (None, true) => Some((i, i + 1, 0)),
            (None, false) => None,
            (Some((s, _, _)), true) => Some((s, i + 1, 0)),
            (Some((s, e, q)), false) if q + 1 >= cfg.hysteresis_count => {
                emit(s, e);
                None
            }
            (Some((s, e, q)), false) => Some((s, e, q + 1)),
        };
    }
    if let Some((s, e, _)) = open {
        emit(s, e);
    }
    Ok(out)
}
