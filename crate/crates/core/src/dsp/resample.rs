use super::{hamming, sinc, ComplexSample};
use crate::{Error, Result};

/// Zero crossings of the interpolation kernel on each side of center.
const KERNEL_ZERO_CROSSINGS: usize = 16;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational resampling by `up/down` with a windowed-sinc anti-alias filter.
///
/// Output length is `floor(len * up / down)`. Absolute frequencies are
/// preserved, so a tone at normalized frequency `f` comes out at
/// `f * down / up`.
pub fn resample(x: &[ComplexSample], up: usize, down: usize) -> Result<Vec<ComplexSample>> {
    if up == 0 || down == 0 {
        return Err(Error::Config(format!(
            "resampling factors must be positive, got {up}/{down}"
        )));
    }
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == down {
        return Ok(x.to_vec());
    }
    let out_len = x.len() * up / down;
    let rate = up.max(down);
    let half = KERNEL_ZERO_CROSSINGS * rate;
    let window = hamming(2 * half + 1);
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let n = i as f64 - half as f64;
            up as f64 / rate as f64 * sinc(n / rate as f64) * window[i]
        })
        .collect();

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let t = (m * down) as i64;
        let k_lo = ((t - half as i64).max(0) as usize).div_ceil(up);
        let k_hi = ((t + half as i64) as usize / up).min(x.len().saturating_sub(1));
        let mut acc = ComplexSample::new(0.0, 0.0);
        for (k, &xk) in x.iter().enumerate().take(k_hi + 1).skip(k_lo) {
            let idx = t - (k * up) as i64 + half as i64;
            acc += xk * kernel[idx as usize];
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;
    use std::f64::consts::PI;

    fn tone(n: usize, f: f64) -> Vec<ComplexSample> {
        (0..n)
            .map(|i| ComplexSample::from_polar(1.0, 2.0 * PI * f * i as f64))
            .collect()
    }

    fn peak_freq(x: &[ComplexSample]) -> f64 {
        let n = x.len();
        let mut buf = x.to_vec();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (k, _) = buf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        let k = if k < n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        k / n as f64
    }

    #[test]
    fn unit_ratio_is_identity() {
        let x = tone(100, 0.1);
        assert_eq!(resample(&x, 1, 1).unwrap(), x);
        assert_eq!(resample(&x, 3, 3).unwrap(), x);
    }

    #[test]
    fn output_length_follows_ratio() {
        let x = tone(100, 0.1);
        assert_eq!(resample(&x, 1, 2).unwrap().len(), 50);
        assert_eq!(resample(&x, 3, 2).unwrap().len(), 150);
    }

    #[test]
    fn zero_factor_is_rejected() {
        assert!(matches!(resample(&[], 0, 1), Err(Error::Config(_))));
        assert!(matches!(resample(&[], 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn upsampling_keeps_absolute_frequency() {
        let x = tone(1024, 0.1);
        let y = resample(&x, 2, 1).unwrap();
        // Skip the transients at both ends.
        let f = peak_freq(&y[256..256 + 1024]);
        assert!((f - 0.05).abs() < 1.0 / 1024.0, "peak at {f}");
        assert!((peak_freq(&x) - 0.1).abs() < 1.0 / 1024.0);
    }

    #[test]
    fn interior_amplitude_is_preserved() {
        let x = tone(2048, 0.02);
        let y = resample(&x, 5, 3).unwrap();
        for s in &y[200..y.len() - 200] {
            assert!((s.norm() - 1.0).abs() < 1e-2, "{}", s.norm());
        }
    }
}
