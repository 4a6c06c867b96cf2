//! Modulation classification of detected transmissions.
//!
//! Each detection is cut out of the time-domain mixture by shifting its
//! center to DC and lowpass filtering to its bandwidth; a small 1D CNN then
//! labels the clip with a modulation scheme or "no signal".

mod dataset;
mod model;

pub use dataset::{
    isolate_band, isolate_interval, isolate_signal, make_amc_dataset, AmcClip, AmcDatasetConfig,
};
pub use model::{
    classify_detections, detect_and_classify, train_amc, AmcConfig, AmcEpoch, AmcModel,
    AmcTrainConfig, ClassifiedDetection, AMC_CHECKPOINT_KIND,
};

use std::fmt;
use std::str::FromStr;

use crate::dsp::Modulation;
use crate::{Error, Result};

/// Classifier output label. Signal classes share their index with
/// [`Modulation::index`]; `NoSignal` is last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AmcClass {
    Bpsk,
    Qpsk,
    Pam4,
    Qam16,
    NoSignal,
}

impl AmcClass {
    pub const ALL: [AmcClass; 5] = [
        AmcClass::Bpsk,
        AmcClass::Qpsk,
        AmcClass::Pam4,
        AmcClass::Qam16,
        AmcClass::NoSignal,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn modulation(self) -> Option<Modulation> {
        match self {
            AmcClass::Bpsk => Some(Modulation::Bpsk),
            AmcClass::Qpsk => Some(Modulation::Qpsk),
            AmcClass::Pam4 => Some(Modulation::Pam4),
            AmcClass::Qam16 => Some(Modulation::Qam16),
            AmcClass::NoSignal => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self.modulation() {
            Some(m) => m.name(),
            None => "NoSignal",
        }
    }
}

impl From<Modulation> for AmcClass {
    fn from(m: Modulation) -> Self {
        match m {
            Modulation::Bpsk => AmcClass::Bpsk,
            Modulation::Qpsk => AmcClass::Qpsk,
            Modulation::Pam4 => AmcClass::Pam4,
            Modulation::Qam16 => AmcClass::Qam16,
        }
    }
}

impl fmt::Display for AmcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AmcClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("nosignal") {
            return Ok(AmcClass::NoSignal);
        }
        s.parse::<Modulation>().map(AmcClass::from)
    }
}
