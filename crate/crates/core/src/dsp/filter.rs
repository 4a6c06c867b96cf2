use super::{hamming, sinc, BasebandFrame, ComplexSample};
use crate::{Error, Result};

/// Tap count used when isolating detected signals.
pub const DEFAULT_LOWPASS_TAPS: usize = 129;

/// Odd-length, even-symmetric (linear phase) FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    cutoff_hz: f64,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, cutoff_hz: f64) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "FIR filter needs an odd tap count, got {}",
                taps.len()
            )));
        }
        let n = taps.len();
        let scale = taps.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(1e-300);
        if (0..n / 2).any(|k| (taps[k] - taps[n - 1 - k]).abs() > 1e-12 * scale) {
            return Err(Error::Config("FIR taps must be even-symmetric".into()));
        }
        Ok(Self { taps, cutoff_hz })
    }

    /// Single unit tap.
    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            cutoff_hz: f64::INFINITY,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }
}

fn check_lowpass(bandwidth_hz: f64, sample_rate_hz: f64, num_taps: usize) -> Result<()> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz < sample_rate_hz) {
        return Err(Error::Config(format!(
            "lowpass bandwidth {bandwidth_hz} Hz must lie in (0, {sample_rate_hz})"
        )));
    }
    if num_taps.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "tap count must be odd, got {num_taps}"
        )));
    }
    Ok(())
}

/// Truncated ideal lowpass `h[n] = (B/fs) sinc((B/fs) n)`, n centered on 0.
pub fn lowpass_prototype(
    bandwidth_hz: f64,
    sample_rate_hz: f64,
    num_taps: usize,
) -> Result<Vec<f64>> {
    check_lowpass(bandwidth_hz, sample_rate_hz, num_taps)?;
    let r = bandwidth_hz / sample_rate_hz;
    let half = (num_taps / 2) as f64;
    Ok((0..num_taps)
        .map(|i| r * sinc(r * (i as f64 - half).abs()))
        .collect())
}

/// Lowpass passing `[-B/2, B/2]`: the truncated sinc prototype with a
/// Hamming taper, renormalized to unit DC gain.
pub fn design_lowpass(
    bandwidth_hz: f64,
    sample_rate_hz: f64,
    num_taps: usize,
) -> Result<FirFilter> {
    let mut taps = lowpass_prototype(bandwidth_hz, sample_rate_hz, num_taps)?;
    for (t, w) in taps.iter_mut().zip(hamming(num_taps)) {
        *t *= w;
    }
    for k in 0..num_taps / 2 {
        taps[num_taps - 1 - k] = taps[k];
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    FirFilter::new(taps, bandwidth_hz / 2.0)
}

/// Centered ("same") convolution with zero padding; the output is aligned
/// with the input, so the filter's group delay is compensated.
pub fn apply_fir(frame: &BasebandFrame, filter: &FirFilter) -> Result<BasebandFrame> {
    let x = frame.samples();
    let taps = filter.taps();
    if x.len() < taps.len() {
        return Err(Error::Input(format!(
            "frame of {} samples is shorter than the {}-tap filter",
            x.len(),
            taps.len()
        )));
    }
    let half = taps.len() / 2;
    let n = x.len();
    let out = (0..n)
        .map(|i| {
            // y[i] = Σ_j h[j] x[i + half - j]
            let j_lo = (i + half + 1).saturating_sub(n);
            let j_hi = (i + half).min(taps.len() - 1);
            let mut acc = ComplexSample::new(0.0, 0.0);
            for j in j_lo..=j_hi {
                acc += x[i + half - j] * taps[j];
            }
            acc
        })
        .collect();
    Ok(frame.with_samples(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone_frame(n: usize, f_norm: f64) -> BasebandFrame {
        let s = (0..n)
            .map(|i| ComplexSample::from_polar(1.0, 2.0 * PI * f_norm * i as f64))
            .collect();
        BasebandFrame::new(s, 1.0).unwrap()
    }

    fn interior_power(f: &BasebandFrame, margin: usize) -> f64 {
        let s = &f.samples()[margin..f.len() - margin];
        s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64
    }

    #[test]
    fn prototype_center_tap_is_bandwidth_ratio() {
        let p = lowpass_prototype(30_000.0, 200_000.0, 129).unwrap();
        assert!((p[64] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn taps_are_symmetric_with_unit_dc_gain() {
        let f = design_lowpass(40_000.0, 200_000.0, 129).unwrap();
        let t = f.taps();
        for k in 0..t.len() {
            assert_eq!(t[k], t[t.len() - 1 - k]);
        }
        assert!((f.dc_gain() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_lowpass_parameters() {
        assert!(matches!(
            design_lowpass(200_000.0, 200_000.0, 129),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            design_lowpass(0.0, 200_000.0, 129),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            design_lowpass(1000.0, 200_000.0, 128),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn half_band_lowpass_response() {
        let f = design_lowpass(0.5, 1.0, 129).unwrap();
        let pass = apply_fir(&tone_frame(4096, 0.1), &f).unwrap();
        let stop = apply_fir(&tone_frame(4096, 0.45), &f).unwrap();
        let pass_db = 10.0 * interior_power(&pass, 128).log10();
        let stop_db = 10.0 * interior_power(&stop, 128).log10();
        assert!(pass_db > -1.0, "passband attenuation {pass_db} dB");
        assert!(stop_db < -20.0, "stopband attenuation {stop_db} dB");
    }

    #[test]
    fn identity_filter_is_noop() {
        let x = tone_frame(64, 0.2);
        assert_eq!(apply_fir(&x, &FirFilter::identity()).unwrap(), x);
    }

    #[test]
    fn dc_passes_with_unit_gain() {
        let x = BasebandFrame::new(vec![ComplexSample::new(0.7, -0.2); 512], 1.0).unwrap();
        let f = design_lowpass(0.1, 1.0, 129).unwrap();
        let y = apply_fir(&x, &f).unwrap();
        for s in &y.samples()[64..512 - 64] {
            assert!((s - ComplexSample::new(0.7, -0.2)).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let x = BasebandFrame::new(vec![ComplexSample::new(0.0, 0.0); 256], 1.0).unwrap();
        let f = design_lowpass(0.3, 1.0, 129).unwrap();
        assert!(apply_fir(&x, &f)
            .unwrap()
            .samples()
            .iter()
            .all(|s| s.norm() == 0.0));
    }

    #[test]
    fn short_frame_is_rejected() {
        let x = tone_frame(64, 0.1);
        let f = design_lowpass(0.3, 1.0, 129).unwrap();
        assert!(matches!(apply_fir(&x, &f), Err(Error::Input(_))));
    }

    #[test]
    fn asymmetric_taps_are_rejected() {
        assert!(FirFilter::new(vec![1.0, 2.0, 3.0], 1.0).is_err());
        assert!(FirFilter::new(vec![1.0, 2.0], 1.0).is_err());
    }
}
