//! Interval geometry shared by every detector.

mod anchors;
mod nms;

pub use anchors::{
    assign_rpn_targets, generate_anchors, AnchorGrid, AnchorLabel, RpnTargets, DEFAULT_SCALES,
};
pub use nms::{nms, threshold_detections};

use crate::{Error, Result};

/// Half-open interval `[start, end)` in (fractional) FFT bin units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    start: f64,
    end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::Degenerate(format!(
                "invalid interval [{start}, {end})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Clip to `[0, size]`; `None` when nothing is left.
    pub fn clip(&self, size: f64) -> Option<Interval> {
        let s = self.start.max(0.0);
        let e = self.end.min(size);
        (s < e).then_some(Interval { start: s, end: e })
    }

    pub fn within(&self, size: f64) -> bool {
        self.start >= 0.0 && self.end <= size
    }
}

/// Intersection over union of two intervals.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    (inter / union).min(1.0)
}

/// Detector output: interval, class, confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub interval: Interval,
    /// 0 is the generic "signal" class.
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(interval: Interval, class_id: usize, score: f64) -> Self {
        Self {
            interval,
            class_id,
            score: score.clamp(0.0, 1.0),
        }
    }
}

/// Box-regression offsets `(t_c, t_w)` relative to a reference interval.
pub type Offsets = [f64; 2];

/// Largest width log-ratio accepted when decoding, so `exp` cannot overflow.
const MAX_LOG_WIDTH: f64 = 8.0;

/// `t_c = (c_truth - c_anchor) / len_anchor`, `t_w = ln(len_truth / len_anchor)`.
pub fn encode_regression(anchor: &Interval, truth: &Interval) -> Result<Offsets> {
    if anchor.len() <= 0.0 {
        return Err(Error::Degenerate("zero-length anchor".into()));
    }
    Ok([
        (truth.center() - anchor.center()) / anchor.len(),
        (truth.len() / anchor.len()).ln(),
    ])
}

/// Exact inverse of [`encode_regression`] (no clipping).
pub fn decode_regression(anchor: &Interval, t: Offsets) -> Interval {
    let len = anchor.len() * t[1].min(MAX_LOG_WIDTH).exp();
    let c = anchor.center() + t[0] * anchor.len();
    Interval {
        start: c - 0.5 * len,
        end: c + 0.5 * len,
    }
}

/// Decode then clip to `[0, size]`.
pub fn decode_clipped(anchor: &Interval, t: Offsets, size: f64) -> Option<Interval> {
    let t = [
        if t[0].is_finite() { t[0] } else { 0.0 },
        if t[1].is_finite() { t[1] } else { 0.0 },
    ];
    decode_regression(anchor, t).clip(size)
}
