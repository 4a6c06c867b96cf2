use std::fmt;
use std::str::FromStr;

use crate::geom::DEFAULT_SCALES;
use crate::{Error, Result};

/// Feature-extractor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Blocks of three 3-tap conv+ReLU layers followed by 2x max pooling.
    Vgg,
    /// VGG blocks with the block input concatenated to its output, then
    /// batch normalization and pooling.
    VggSkip,
    /// Blocks of one 7-tap conv, ReLU, batch normalization and pooling.
    Signal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Vgg => "vgg",
            Family::VggSkip => "vgg_skip",
            Family::Signal => "signal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg" => Ok(Family::Vgg),
            "vgg_skip" => Ok(Family::VggSkip),
            "signal" => Ok(Family::Signal),
            _ => Err(Error::Config(format!(
                "unknown feature family {s:?} (vgg, vgg_skip, signal)"
            ))),
        }
    }
}

/// Filter count of pooled block `i` (1-based): 64, 128, 256, 512, 512.
pub fn block_filters(i: usize) -> usize {
    (64usize << (i.saturating_sub(1)).min(4)).min(512)
}

/// Backbone output filters for a stride.
pub fn filters_for_stride(stride: usize) -> Option<usize> {
    match stride {
        2 | 4 | 8 | 16 | 32 => Some(block_filters(stride.trailing_zeros() as usize)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureExtractorConfig {
    pub family: Family,
    /// Total downscaling: 2, 4, 8, 16 or 32.
    pub stride: usize,
    /// Narrower proposal and classifier heads.
    pub downscaled: bool,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        Self {
            family: Family::Vgg,
            stride: 16,
            downscaled: false,
        }
    }
}

impl FeatureExtractorConfig {
    /// Number of pooled blocks, `log2(stride)`.
    pub fn pooled_blocks(&self) -> usize {
        self.stride.trailing_zeros() as usize
    }

    /// Filters in the last block (the stride's table entry).
    pub fn filters_out(&self) -> usize {
        filters_for_stride(self.stride).unwrap_or(0)
    }
}

/// Full detector shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub features: FeatureExtractorConfig,
    pub fft_size: usize,
    pub scales: Vec<usize>,
    /// Foreground classes; the classifier adds one background class.
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: FeatureExtractorConfig::default(),
            fft_size: crate::FFT_SIZE,
            scales: DEFAULT_SCALES.to_vec(),
            num_classes: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.features.stride;
        if filters_for_stride(s).is_none() {
            return Err(Error::Config(format!(
                "stride must be one of 2, 4, 8, 16, 32; got {s}"
            )));
        }
        if self.fft_size == 0 || !self.fft_size.is_multiple_of(s) {
            return Err(Error::Config(format!(
                "stride {s} does not divide input size {}",
                self.fft_size
            )));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config(
                "anchor scales must be non-empty and positive".into(),
            ));
        }
        if self.num_classes == 0 {
            return Err(Error::Config(
                "at least one foreground class is required".into(),
            ));
        }
        Ok(())
    }

    /// Depth of the proposal head's intermediate convolution.
    pub fn rpn_depth(&self) -> usize {
        if self.features.downscaled {
            128
        } else {
            512
        }
    }

    /// Width of the classifier's fully connected layers.
    pub fn fc_width(&self) -> usize {
        if self.features.downscaled {
            2048
        } else {
            4096
        }
    }

    pub fn feature_len(&self) -> usize {
        self.fft_size / self.features.stride
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scales: Vec<String> = self.scales.iter().map(|s| s.to_string()).collect();
        write!(
            f,
            "family={} stride={} downscaled={} fft_size={} classes={} scales={}",
            self.features.family,
            self.features.stride,
            u8::from(self.features.downscaled),
            self.fft_size,
            self.num_classes,
            scales.join(",")
        )
    }
}

impl FromStr for ModelConfig {
    type Err = Error;

    /// Parses the `key=value` form produced by `Display`; missing keys take
    /// defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for field in s.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed model config field {field:?}")))?;
            let num = |v: &str| {
                v.parse::<usize>().map_err(|_| {
                    Error::Config(format!("bad value in model config field {field:?}"))
                })
            };
            match k {
                "family" => cfg.features.family = v.parse()?,
                "stride" => cfg.features.stride = num(v)?,
                "downscaled" => {
                    cfg.features.downscaled = match v {
                        "0" => false,
                        "1" => true,
                        _ => {
                            return Err(Error::Config(format!(
                                "bad value in model config field {field:?}"
                            )))
                        }
                    }
                }
                "fft_size" => cfg.fft_size = num(v)?,
                "classes" => cfg.num_classes = num(v)?,
                "scales" => cfg.scales = v.split(',').map(num).collect::<Result<_>>()?,
                _ => return Err(Error::Config(format!("unknown model config key {k:?}"))),
            }
        }
        if cfg.fft_size > 1 << 20 || cfg.num_classes > 1024 || cfg.scales.len() > 64 {
            return Err(Error::Config("model config out of range".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How the two training steps interleave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternation {
    /// Both steps on every frame.
    PerSample,
    /// Even epochs train the proposal step, odd epochs the classifier step.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Frames per epoch, cycling through a reshuffled dataset.
    pub epoch_length: usize,
    pub rpn_overlap_min: f64,
    pub rpn_overlap_max: f64,
    /// Suppression overlap among detections at inference.
    pub nms_overlap: f64,
    pub lr: f64,
    pub seed: u64,
    /// Anchors sampled per proposal step, at most `anchor_positive_fraction` positive.
    pub anchor_batch: usize,
    pub anchor_positive_fraction: f64,
    /// Regions sampled per classifier step, at most `roi_foreground_fraction` foreground.
    pub roi_batch: usize,
    pub roi_foreground_fraction: f64,
    /// Proposals kept for the classifier step.
    pub train_proposals: usize,
    pub alternation: Alternation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            epoch_length: 10_000,
            rpn_overlap_min: 0.3,
            rpn_overlap_max: 0.7,
            nms_overlap: 0.5,
            lr: 1e-5,
            seed: 0,
            anchor_batch: 128,
            anchor_positive_fraction: 0.5,
            roi_batch: 32,
            roi_foreground_fraction: 0.25,
            train_proposals: 256,
            alternation: Alternation::PerSample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rpn_overlap_min
            && self.rpn_overlap_min < self.rpn_overlap_max
            && self.rpn_overlap_max < 1.0)
        {
            return Err(Error::Config(format!(
                "need 0 < overlap_min ({}) < overlap_max ({}) < 1",
                self.rpn_overlap_min, self.rpn_overlap_max
            )));
        }
        if self.epochs == 0
            || self.epoch_length == 0
            || self.anchor_batch == 0
            || self.roi_batch == 0
        {
            return Err(Error::Config(
                "epochs, epoch length and batch sizes must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, f) in [
            ("anchor positive fraction", self.anchor_positive_fraction),
            ("roi foreground fraction", self.roi_foreground_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}
