use rand::Rng;

use super::AmcClass;
use crate::dsp::{
    apply_fir, design_lowpass, frequency_shift, normalize_power, BasebandFrame,
    DEFAULT_LOWPASS_TAPS,
};
use crate::geom::{Detection, Interval};
use crate::synth::{bin_to_freq, DatasetRecord};
use crate::{Error, Result};

/// Wraps a frequency into `[-fs/2, fs/2)`.
fn wrap_frequency(f: f64, fs: f64) -> f64 {
    (f + fs / 2.0).rem_euclid(fs) - fs / 2.0
}

/// Moves `center_hz` to DC and lowpass filters to `bandwidth_hz`. A
/// bandwidth at or above the sample rate skips the filter.
pub fn isolate_band(
    baseband: &BasebandFrame,
    center_hz: f64,
    bandwidth_hz: f64,
    taps: usize,
) -> Result<BasebandFrame> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite() && center_hz.is_finite()) {
        return Err(Error::Degenerate(format!(
            "cannot isolate a band of width {bandwidth_hz} Hz at {center_hz} Hz"
        )));
    }
    let fs = baseband.sample_rate_hz();
    let shifted = frequency_shift(baseband, wrap_frequency(center_hz, fs))?;
    if bandwidth_hz >= fs {
        return Ok(shifted);
    }
    apply_fir(&shifted, &design_lowpass(bandwidth_hz, fs, taps)?)
}

/// Isolates the band covered by a bin interval of an `fft_size`-bin
/// spectrum of `baseband`.
pub fn isolate_interval(
    baseband: &BasebandFrame,
    interval: &Interval,
    fft_size: usize,
) -> Result<BasebandFrame> {
    if interval.len() <= 0.0 {
        return Err(Error::Degenerate("cannot isolate an empty interval".into()));
    }
    if !interval.within(fft_size as f64) {
        return Err(Error::Input(format!(
            "interval [{}, {}) lies outside the {fft_size}-bin spectrum",
            interval.start(),
            interval.end()
        )));
    }
    let fs = baseband.sample_rate_hz();
    let center = bin_to_freq(interval.center(), fs, fft_size);
    let bandwidth = interval.len() * fs / fft_size as f64;
    isolate_band(baseband, center, bandwidth, DEFAULT_LOWPASS_TAPS)
}

/// Isolates one detected transmission from the received mixture.
pub fn isolate_signal(
    baseband: &BasebandFrame,
    det: &Detection,
    fft_size: usize,
) -> Result<BasebandFrame> {
    isolate_interval(baseband, &det.interval, fft_size)
}

/// A classifier input: unit-power I/Q samples, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct AmcClip {
    pub iq: Vec<f32>,
    pub label: AmcClass,
    pub snr_db: f64,
}

impl AmcClip {
    /// Normalizes `frame` to unit power; an all-zero frame stays zero.
    pub fn from_frame(frame: &BasebandFrame, label: AmcClass, snr_db: f64) -> Self {
        let frame = normalize_power(frame).unwrap_or_else(|_| frame.clone());
        let iq = frame
            .samples()
            .iter()
            .flat_map(|s| [s.re as f32, s.im as f32])
            .collect();
        Self { iq, label, snr_db }
    }

    /// Complex samples in the clip.
    pub fn len(&self) -> usize {
        self.iq.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.iq.is_empty()
    }
}

/// Perturbations that mimic imperfect detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcDatasetConfig {
    /// Center offset drawn uniformly from `±max_offset_hz`.
    pub max_offset_hz: f64,
    /// Bandwidth scale drawn uniformly from this range.
    pub bandwidth_scale: (f64, f64),
    /// Empty-band clips attempted per record.
    pub no_signal_per_record: usize,
}

impl Default for AmcDatasetConfig {
    fn default() -> Self {
        Self {
            max_offset_hz: 2000.0,
            bandwidth_scale: (0.7, 1.5),
            no_signal_per_record: 1,
        }
    }
}

impl AmcDatasetConfig {
    /// No perturbation: clips are isolated at their exact truth band.
    pub fn exact() -> Self {
        Self {
            max_offset_hz: 0.0,
            bandwidth_scale: (1.0, 1.0),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bandwidth_scale;
        if !(self.max_offset_hz >= 0.0 && lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "invalid AMC dataset perturbation {self:?}"
            )));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Attempts to place a `width`-bin window that touches no truth.
fn free_window<R: Rng + ?Sized>(rec: &DatasetRecord, width: f64, rng: &mut R) -> Option<Interval> {
    let n = rec.spectrum.fft_size() as f64;
    if width >= n {
        return None;
    }
    for _ in 0..32 {
        let start = rng.random_range(0.0..n - width).floor();
        let w = Interval::new(start, start + width).ok()?;
        if rec
            .truths
            .iter()
            .all(|t| w.intersection(&t.interval) == 0.0)
        {
            return Some(w);
        }
    }
    None
}

/// One clip per truth, isolated with a perturbed band and labelled with its
/// scheme, plus empty-band clips labelled `NoSignal`. Empty windows take
/// the width of one of the record's signals, or a width from the generator's
/// range when the record has none.
pub fn make_amc_dataset<R: Rng + ?Sized>(
    records: &[DatasetRecord],
    config: &AmcDatasetConfig,
    rng: &mut R,
) -> Result<Vec<AmcClip>> {
    config.validate()?;
    let mut clips = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let bb = rec
            .baseband
            .as_ref()
            .ok_or_else(|| Error::Input(format!("record {i} carries no baseband samples")))?;
        let fs = bb.sample_rate_hz();
        let n = rec.spectrum.fft_size();
        for t in &rec.truths {
            let center = bin_to_freq(t.interval.center(), fs, n)
                + uniform(rng, -config.max_offset_hz, config.max_offset_hz);
            let bw = t.interval.len() * fs / n as f64
                * uniform(rng, config.bandwidth_scale.0, config.bandwidth_scale.1);
            let frame = isolate_band(bb, center, bw, DEFAULT_LOWPASS_TAPS)?;
            clips.push(AmcClip::from_frame(&frame, t.scheme.into(), rec.snr_db));
        }
        for _ in 0..config.no_signal_per_record {
            let width = match rec.truths.len() {
                0 => uniform(rng, n as f64 / 64.0, n as f64 / 8.0).round(),
                k => rec.truths[rng.random_range(0..k)].interval.len(),
            };
            if let Some(w) = free_window(rec, width.max(2.0), rng) {
                let frame = isolate_interval(bb, &w, n)?;
                clips.push(AmcClip::from_frame(&frame, AmcClass::NoSignal, rec.snr_db));
            }
        }
    }
    Ok(clips)
}
