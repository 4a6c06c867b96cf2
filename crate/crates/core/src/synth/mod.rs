//! Randomized multi-transmitter scenes, their ground truth, and the on-disk
//! dataset format.

mod cost;
mod dataset;

pub use cost::{acquisition_cost, AcquisitionCost};
pub use dataset::{
    dataset_paths, decode_payload, generate_dataset, generate_records, parse_index, read_dataset,
    sweep_prefix, synthesize_record, write_dataset, Dataset, DatasetHeader, IndexEntry, SnrSpec,
};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{
    awgn, fft_db, frequency_shift, modulate, normalize_power, pulse_shape, resample,
    rician_channel, BasebandFrame, ComplexSample, Modulation, RicianConfig, SpectrumFrame,
};
use crate::geom::Interval;
use crate::{Error, Result};

/// Upper bound on simultaneous transmitters in a scene.
pub const MAX_TRANSMISSIONS: usize = 5;
/// Raised-cosine rolloff of every synthesized transmitter.
pub const ROLLOFF: f64 = 0.35;
/// Samples per symbol before resampling to the receiver rate.
pub const SAMPLES_PER_SYMBOL: usize = 8;
/// Pulse-shaping filter span in symbols.
pub const PULSE_SPAN: usize = 8;
/// Fixed resampling denominator; the numerator sets the bandwidth.
const RESAMPLE_DOWN: usize = 32;

/// One transmitter: center frequency relative to DC, occupied bandwidth and
/// modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionSpec {
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub scheme: Modulation,
}

impl TransmissionSpec {
    pub fn low_hz(&self) -> f64 {
        self.center_freq_hz - self.bandwidth_hz / 2.0
    }

    pub fn high_hz(&self) -> f64 {
        self.center_freq_hz + self.bandwidth_hz / 2.0
    }

    pub fn overlaps(&self, other: &TransmissionSpec) -> bool {
        self.low_hz() < other.high_hz() && other.low_hz() < self.high_hz()
    }

    pub fn fits_in_band(&self, sample_rate_hz: f64) -> bool {
        self.bandwidth_hz > 0.0
            && self.center_freq_hz.abs() + self.bandwidth_hz / 2.0 <= sample_rate_hz / 2.0
    }

    /// Integer resampling numerator realising this bandwidth.
    fn resample_up(&self, sample_rate_hz: f64) -> usize {
        resample_up_for(self.bandwidth_hz, sample_rate_hz)
    }
}

fn resample_up_for(bandwidth_hz: f64, sample_rate_hz: f64) -> usize {
    let ratio = sample_rate_hz * (1.0 + ROLLOFF) / (SAMPLES_PER_SYMBOL as f64 * bandwidth_hz);
    ((ratio * RESAMPLE_DOWN as f64).round() as usize).max(1)
}

fn bandwidth_for_up(up: usize, sample_rate_hz: f64) -> f64 {
    sample_rate_hz * (1.0 + ROLLOFF) * RESAMPLE_DOWN as f64
        / (SAMPLES_PER_SYMBOL as f64 * up as f64)
}

/// Nearest bandwidth the synthesis chain can produce exactly.
pub fn achievable_bandwidth(bandwidth_hz: f64, sample_rate_hz: f64) -> f64 {
    bandwidth_for_up(
        resample_up_for(bandwidth_hz, sample_rate_hz),
        sample_rate_hz,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub transmissions: Vec<TransmissionSpec>,
    pub snr_db: f64,
    /// Seeds the rendering noise, symbols and channel.
    pub seed: u64,
    pub sample_rate_hz: f64,
}

impl Scenario {
    /// A noise-only scene.
    pub fn empty(snr_db: f64, seed: u64, sample_rate_hz: f64) -> Self {
        Self {
            transmissions: Vec::new(),
            snr_db,
            seed,
            sample_rate_hz,
        }
    }
}

/// Ground-truth occupancy of one transmission in bin units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub interval: Interval,
    pub scheme: Modulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// Seed the record was synthesized from; replays it exactly.
    pub seed: u64,
    pub snr_db: f64,
    pub spectrum: SpectrumFrame,
    /// Time-domain samples behind `spectrum`; kept for modulation datasets.
    pub baseband: Option<BasebandFrame>,
    pub truths: Vec<Truth>,
}

impl DatasetRecord {
    pub fn intervals(&self) -> Vec<Interval> {
        self.truths.iter().map(|t| t.interval).collect()
    }
}

/// Drops one member of an overlapping pair, chosen uniformly, until no two
/// transmissions overlap.
pub fn eliminate_overlaps<R: Rng + ?Sized>(
    mut txs: Vec<TransmissionSpec>,
    rng: &mut R,
) -> Vec<TransmissionSpec> {
    'outer: loop {
        for i in 0..txs.len() {
            for j in i + 1..txs.len() {
                if txs[i].overlaps(&txs[j]) {
                    let victim = if rng.random_bool(0.5) { i } else { j };
                    txs.remove(victim);
                    continue 'outer;
                }
            }
        }
        return txs;
    }
}

/// Draws five candidate transmitters (bandwidth uniform in
/// `[band/64, band/8]`, snapped to an achievable value; center uniform so
/// the signal stays in band; scheme uniform) and removes overlaps.
pub fn random_scenario<R: Rng + ?Sized>(
    rng: &mut R,
    snr_db: f64,
    band_hz: f64,
) -> Result<Scenario> {
    if !(band_hz > 0.0 && band_hz.is_finite()) {
        return Err(Error::Config(format!(
            "band must be positive, got {band_hz}"
        )));
    }
    let candidates = (0..MAX_TRANSMISSIONS)
        .map(|_| {
            let drawn = rng.random_range(band_hz / 64.0..=band_hz / 8.0);
            let bandwidth_hz = achievable_bandwidth(drawn, band_hz);
            let reach = band_hz / 2.0 - bandwidth_hz / 2.0;
            let center_freq_hz = rng.random_range(-reach..=reach);
            let scheme = *Modulation::ALL.choose(rng).expect("non-empty");
            TransmissionSpec {
                center_freq_hz,
                bandwidth_hz,
                scheme,
            }
        })
        .collect();
    let transmissions = eliminate_overlaps(candidates, rng);
    Ok(Scenario {
        transmissions,
        snr_db,
        seed: rng.random(),
        sample_rate_hz: band_hz,
    })
}

/// Rendering knobs that are not part of the scene itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub fft_size: usize,
    pub rician: RicianConfig,
    /// Keep time-domain samples in the record.
    pub keep_baseband: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            fft_size: crate::FFT_SIZE,
            rician: RicianConfig::default(),
            keep_baseband: false,
        }
    }
}

/// `bin = fft/2 + round(fft * f / fs)`.
pub fn freq_to_bin(freq_hz: f64, sample_rate_hz: f64, fft_size: usize) -> f64 {
    (fft_size / 2) as f64 + (fft_size as f64 * freq_hz / sample_rate_hz).round()
}

/// Inverse of [`freq_to_bin`] on bin edges.
pub fn bin_to_freq(bin: f64, sample_rate_hz: f64, fft_size: usize) -> f64 {
    (bin - (fft_size / 2) as f64) * sample_rate_hz / fft_size as f64
}

pub fn truth_interval(
    tx: &TransmissionSpec,
    sample_rate_hz: f64,
    fft_size: usize,
) -> Result<Interval> {
    let lo = freq_to_bin(tx.low_hz(), sample_rate_hz, fft_size).max(0.0);
    let hi = freq_to_bin(tx.high_hz(), sample_rate_hz, fft_size).min(fft_size as f64);
    Interval::new(lo, hi)
}

fn render_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// One unit-power transmitter at baseband, `len` samples at `fs`.
fn synthesize_transmission<R: RngCore>(
    tx: &TransmissionSpec,
    sample_rate_hz: f64,
    len: usize,
    rng: &mut R,
) -> Result<BasebandFrame> {
    let up = tx.resample_up(sample_rate_hz);
    let down = RESAMPLE_DOWN;
    // Input-rate samples discarded at each end to skip filter transients.
    let warmup = PULSE_SPAN * SAMPLES_PER_SYMBOL + 32;
    let needed_in = (len * down).div_ceil(up) + 2 * warmup + 1;
    let n_sym = needed_in.div_ceil(SAMPLES_PER_SYMBOL);
    let bits: Vec<u8> = (0..n_sym * tx.scheme.bits_per_symbol())
        .map(|_| rng.random_range(0..=1u8))
        .collect();
    let symbols = modulate(&bits, tx.scheme)?;
    let shaped = pulse_shape(&symbols, ROLLOFF, PULSE_SPAN, SAMPLES_PER_SYMBOL)?;
    let resampled = resample(&shaped, up, down)?;
    let skip = warmup * up / down;
    if resampled.len() < skip + len {
        return Err(Error::State("resampled burst too short".into()));
    }
    let frame = BasebandFrame::new(resampled[skip..skip + len].to_vec(), sample_rate_hz)?;
    // Shifting by -fc moves DC up to fc.
    let shifted = frequency_shift(&frame, -tx.center_freq_hz)?;
    normalize_power(&shifted)
}

/// Synthesizes, sums, normalizes and impairs every transmission, then
/// takes the dB spectrum of the first `fft_size` samples.
pub fn render_scenario(s: &Scenario, config: &RenderConfig) -> Result<DatasetRecord> {
    let fs = s.sample_rate_hz;
    let n = config.fft_size;
    for tx in &s.transmissions {
        if !tx.fits_in_band(fs) {
            return Err(Error::Config(format!(
                "transmission at {} Hz with {} Hz bandwidth exceeds the band",
                tx.center_freq_hz, tx.bandwidth_hz
            )));
        }
    }
    let mut rng = render_rng(s.seed);
    let mut sum = vec![ComplexSample::new(0.0, 0.0); n];
    for tx in &s.transmissions {
        let burst = synthesize_transmission(tx, fs, n, &mut rng)?;
        for (acc, x) in sum.iter_mut().zip(burst.samples()) {
            *acc += x;
        }
    }
    let mut frame = BasebandFrame::new(sum, fs)?;
    if !s.transmissions.is_empty() {
        frame = normalize_power(&frame)?;
        frame = rician_channel(&frame, &config.rician, &mut rng)?;
    }
    frame = awgn(&frame, s.snr_db, &mut rng)?;
    // Round through f32 so that saved records reload bit-exactly.
    let frame = BasebandFrame::new(
        frame
            .samples()
            .iter()
            .map(|c| ComplexSample::new(c.re as f32 as f64, c.im as f32 as f64))
            .collect(),
        fs,
    )?;
    let spectrum = fft_db(&frame, n)?;
    let mut truths = s
        .transmissions
        .iter()
        .map(|tx| {
            Ok(Truth {
                interval: truth_interval(tx, fs, n)?,
                scheme: tx.scheme,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    truths.sort_by(|a, b| a.interval.start().total_cmp(&b.interval.start()));
    Ok(DatasetRecord {
        seed: s.seed,
        snr_db: s.snr_db,
        spectrum,
        baseband: config.keep_baseband.then_some(frame),
        truths,
    })
}
