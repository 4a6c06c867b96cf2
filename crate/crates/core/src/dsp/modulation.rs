use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use super::{sinc, ComplexSample};
use crate::{Error, Result};

/// Digital modulation schemes used by the scene generator.
///
/// All constellations are scaled to unit average power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Pam4,
    Qam16,
}

impl Modulation {
    pub const ALL: [Modulation; 4] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Pam4,
        Modulation::Qam16,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk | Modulation::Pam4 => 2,
            Modulation::Qam16 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Pam4 => "PAM4",
            Modulation::Qam16 => "QAM16",
        }
    }

    /// Index into [`Modulation::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    fn map(self, bits: &[u8]) -> ComplexSample {
        let b = |i: usize| bits.get(i).copied().unwrap_or(0) & 1;
        match self {
            Modulation::Bpsk => ComplexSample::new(if b(0) == 1 { 1.0 } else { -1.0 }, 0.0),
            Modulation::Qpsk => ComplexSample::new(
                (2.0 * b(0) as f64 - 1.0) * FRAC_1_SQRT_2,
                (2.0 * b(1) as f64 - 1.0) * FRAC_1_SQRT_2,
            ),
            Modulation::Pam4 => ComplexSample::new(gray4(b(0), b(1)) / 5f64.sqrt(), 0.0),
            Modulation::Qam16 => {
                let s = 10f64.sqrt();
                ComplexSample::new(gray4(b(0), b(1)) / s, gray4(b(2), b(3)) / s)
            }
        }
    }
}

/// Gray-coded 4-level amplitude: 00 → -3, 01 → -1, 11 → +1, 10 → +3.
fn gray4(b0: u8, b1: u8) -> f64 {
    match (b0, b1) {
        (0, 0) => -3.0,
        (0, _) => -1.0,
        (_, 1) => 1.0,
        _ => 3.0,
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modulation::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unsupported modulation scheme '{s}'")))
    }
}

/// Maps a bit stream onto constellation symbols, one symbol per
/// `bits_per_symbol` group. A trailing partial group is zero-padded.
pub fn modulate(bits: &[u8], scheme: Modulation) -> Result<Vec<ComplexSample>> {
    if bits.is_empty() {
        return Err(Error::Input("cannot modulate an empty bit vector".into()));
    }
    Ok(bits
        .chunks(scheme.bits_per_symbol())
        .map(|group| scheme.map(group))
        .collect())
}

/// Raised-cosine impulse response spanning `span_symbols` symbols at `sps`
/// samples per symbol (`span_symbols * sps + 1` taps, unit peak).
pub fn raised_cosine_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::Config(format!(
            "rolloff must be in [0, 1], got {rolloff}"
        )));
    }
    if sps < 2 {
        return Err(Error::Config(format!(
            "samples per symbol must be >= 2, got {sps}"
        )));
    }
    if span_symbols == 0 {
        return Err(Error::Config(
            "filter span must be at least one symbol".into(),
        ));
    }
    let n = span_symbols * sps + 1;
    let center = (n / 2) as f64;
    Ok((0..n)
        .map(|i| {
            let t = (i as f64 - center) / sps as f64;
            let denom = 1.0 - (2.0 * rolloff * t).powi(2);
            if denom.abs() < 1e-10 {
                PI / 4.0 * sinc(1.0 / (2.0 * rolloff))
            } else {
                sinc(t) * (PI * rolloff * t).cos() / denom
            }
        })
        .collect())
}

/// Upsamples `symbols` by `sps` and filters with a raised-cosine pulse.
///
/// Output length is `(len - 1) * sps + taps`, so a single impulse symbol
/// reproduces the tap vector exactly.
pub fn pulse_shape(
    symbols: &[ComplexSample],
    rolloff: f64,
    span_symbols: usize,
    sps: usize,
) -> Result<Vec<ComplexSample>> {
    let taps = raised_cosine_taps(rolloff, span_symbols, sps)?;
    if symbols.is_empty() {
        return Err(Error::Input("no symbols to shape".into()));
    }
    let out_len = (symbols.len() - 1) * sps + taps.len();
    let mut out = vec![ComplexSample::new(0.0, 0.0); out_len];
    for (k, &s) in symbols.iter().enumerate() {
        if s.re == 0.0 && s.im == 0.0 {
            continue;
        }
        let base = k * sps;
        for (j, &h) in taps.iter().enumerate() {
            out[base + j] += s * h;
        }
    }
    Ok(out)
}
