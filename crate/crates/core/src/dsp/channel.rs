use rand::Rng;
use rand_distr::StandardNormal;

use super::{BasebandFrame, ComplexSample};
use crate::{Error, Result};

/// Scales a frame to unit mean power.
pub fn normalize_power(frame: &BasebandFrame) -> Result<BasebandFrame> {
    let p = frame.mean_power();
    if p <= 0.0 {
        return Err(Error::Degenerate(
            "cannot normalize an all-zero frame".into(),
        ));
    }
    let g = 1.0 / p.sqrt();
    Ok(frame.with_samples(frame.samples().iter().map(|s| s * g).collect()))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> ComplexSample {
    ComplexSample::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Adds circular complex Gaussian noise with per-sample variance
/// `10^(-snr_db/10)`, i.e. the SNR relative to a unit-power frame.
/// `f64::INFINITY` disables the noise.
pub fn awgn<R: Rng + ?Sized>(
    frame: &BasebandFrame,
    snr_db: f64,
    rng: &mut R,
) -> Result<BasebandFrame> {
    if snr_db.is_nan() {
        return Err(Error::Config("SNR must not be NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(frame.clone());
    }
    let sigma = (10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    let out = frame
        .samples()
        .iter()
        .map(|&s| s + complex_normal(rng) * sigma)
        .collect();
    Ok(frame.with_samples(out))
}

/// Static two-path Rician channel: a line-of-sight copy plus one delayed,
/// randomly phased scattered copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianConfig {
    /// Linear K-factor; `f64::INFINITY` means line of sight only.
    pub k_factor: f64,
    pub delay_samples: usize,
    /// Scattered-path gain relative to the diffuse power, in dB.
    pub scattered_gain_db: f64,
}

impl Default for RicianConfig {
    fn default() -> Self {
        Self {
            k_factor: 4.0,
            delay_samples: 2,
            scattered_gain_db: -10.0,
        }
    }
}

pub fn rician_channel<R: Rng + ?Sized>(
    frame: &BasebandFrame,
    config: &RicianConfig,
    rng: &mut R,
) -> Result<BasebandFrame> {
    let k = config.k_factor;
    if k.is_nan() || k < 0.0 {
        return Err(Error::Config(format!(
            "K-factor must be non-negative, got {k}"
        )));
    }
    if k == f64::INFINITY {
        return Ok(frame.clone());
    }
    let los = (k / (k + 1.0)).sqrt();
    let diffuse = (1.0 / (k + 1.0)).sqrt() * 10f64.powf(config.scattered_gain_db / 20.0);
    let x = frame.samples();
    let tap = if diffuse > 0.0 {
        complex_normal(rng) * (0.5f64).sqrt() * diffuse
    } else {
        ComplexSample::new(0.0, 0.0)
    };
    let d = config.delay_samples;
    let out = (0..x.len())
        .map(|n| {
            let mut y = x[n] * los;
            if n >= d {
                y += x[n - d] * tap;
            }
            y
        })
        .collect();
    Ok(frame.with_samples(out))
}
