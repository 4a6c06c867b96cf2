use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::{BasebandFrame, ComplexSample};
use crate::{Error, Result};

/// Lower clamp applied to dB magnitudes.
pub const DB_FLOOR: f32 = -120.0;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Centered dB-magnitude spectrum; DC sits at index `fft_size / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    bins: Vec<f32>,
}

impl SpectrumFrame {
    pub fn new(bins: Vec<f32>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Input("spectrum frame must not be empty".into()));
        }
        if let Some(i) = bins.iter().position(|b| !b.is_finite()) {
            return Err(Error::Input(format!("spectrum bin {i} is not finite")));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f32] {
        &self.bins
    }

    pub fn fft_size(&self) -> usize {
        self.bins.len()
    }

    pub fn into_bins(self) -> Vec<f32> {
        self.bins
    }
}

/// `y[n] = s[n] · exp(-j 2π f_o n / fs)`: moves content at `f_o` to DC.
pub fn frequency_shift(frame: &BasebandFrame, offset_hz: f64) -> Result<BasebandFrame> {
    let fs = frame.sample_rate_hz();
    if offset_hz.is_nan() || offset_hz.abs() >= fs / 2.0 {
        return Err(Error::Aliasing {
            offset_hz,
            sample_rate_hz: fs,
        });
    }
    if offset_hz == 0.0 {
        return Ok(frame.clone());
    }
    let w = -2.0 * PI * offset_hz / fs;
    let out = frame
        .samples()
        .iter()
        .enumerate()
        .map(|(n, &s)| s * ComplexSample::from_polar(1.0, w * n as f64))
        .collect();
    Ok(frame.with_samples(out))
}

/// dB magnitude of the unitary FFT of the first `fft_size` samples,
/// centered and clamped at [`DB_FLOOR`]. Unit-power white noise sits
/// near 0 dB per bin.
pub fn fft_db(frame: &BasebandFrame, fft_size: usize) -> Result<SpectrumFrame> {
    if fft_size == 0 {
        return Err(Error::Config("FFT size must be positive".into()));
    }
    if frame.len() < fft_size {
        return Err(Error::Input(format!(
            "frame has {} samples, FFT needs {fft_size}",
            frame.len()
        )));
    }
    let mut buf = frame.samples()[..fft_size].to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(fft_size).process(&mut buf));
    let half = fft_size / 2;
    let norm = 1.0 / fft_size as f64;
    let bins = (0..fft_size)
        .map(|i| {
            let k = (i + fft_size - half) % fft_size;
            let p = buf[k].norm_sqr() * norm;
            let db = 10.0 * p.log10();
            if db.is_finite() {
                (db as f32).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        })
        .collect();
    Ok(SpectrumFrame { bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tone(n: usize, f_hz: f64, fs: f64) -> BasebandFrame {
        let s = (0..n)
            .map(|i| ComplexSample::from_polar(1.0, 2.0 * PI * f_hz / fs * i as f64))
            .collect();
        BasebandFrame::new(s, fs).unwrap()
    }

    fn argmax(v: &[f32]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn zero_shift_is_identity() {
        let f = tone(64, 1000.0, 200_000.0);
        assert_eq!(frequency_shift(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn shift_round_trip() {
        let f = tone(4096, 1234.0, 200_000.0);
        let g = frequency_shift(&frequency_shift(&f, 37_000.0).unwrap(), -37_000.0).unwrap();
        for (a, b) in f.samples().iter().zip(g.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_moves_tone_to_dc() {
        let f = tone(1024, 20_000.0, 200_000.0);
        let before = fft_db(&f, 1024).unwrap();
        assert_eq!(argmax(before.bins()), 512 + 102);
        let g = frequency_shift(&f, 20_000.0).unwrap();
        assert_eq!(argmax(fft_db(&g, 1024).unwrap().bins()), 512);
    }

    #[test]
    fn aliasing_shift_is_rejected() {
        let f = tone(16, 0.0, 200_000.0);
        assert!(matches!(
            frequency_shift(&f, 100_000.0),
            Err(Error::Aliasing { .. })
        ));
        assert!(matches!(
            frequency_shift(&f, -150_000.0),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn tone_lands_on_its_bin() {
        for b in [-300i64, -1, 0, 5, 200, 511] {
            let fs = 1024.0;
            let f = tone(1024, b as f64, fs);
            let s = fft_db(&f, 1024).unwrap();
            assert_eq!(argmax(s.bins()) as i64, 512 + b);
        }
    }

    #[test]
    fn zero_frame_hits_floor() {
        let f = BasebandFrame::new(vec![ComplexSample::new(0.0, 0.0); 1024], 1.0).unwrap();
        assert!(fft_db(&f, 1024)
            .unwrap()
            .bins()
            .iter()
            .all(|&b| b == DB_FLOOR));
    }

    #[test]
    fn short_frame_is_rejected() {
        let f = tone(100, 0.0, 1.0);
        assert!(matches!(fft_db(&f, 1024), Err(Error::Input(_))));
    }

    #[test]
    fn white_noise_bins_average_near_zero_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames = 200;
        let mut mean_power = vec![0.0f64; 1024];
        for _ in 0..frames {
            let s = (0..1024)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    ComplexSample::new(re, im) * (0.5f64).sqrt()
                })
                .collect();
            let f = BasebandFrame::new(s, 1.0).unwrap();
            for (m, b) in mean_power.iter_mut().zip(fft_db(&f, 1024).unwrap().bins()) {
                *m += 10f64.powf(*b as f64 / 10.0) / frames as f64;
            }
        }
        for p in mean_power {
            let db = 10.0 * p.log10();
            assert!(db.abs() < 3.0, "bin mean {db} dB");
        }
    }
}
