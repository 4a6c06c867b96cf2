//! Detection scoring: matching, precision/recall, interpolated AP and mAP,
//! mIoU, Pd (true positive rate), Pfa (false discovery rate) and timing.

mod ap;
mod report;

pub use ap::{interpolated_ap, mean_ap, pr_curve, PrPoint, DEFAULT_AP_POINTS, DEFAULT_MAP_CUTOFFS};
pub use report::{evaluate, timing_report, EvalConfig, EvalReport, MethodTiming, SnrRow};

use crate::geom::{iou, Detection, Interval};
use crate::{Error, Result};

/// IoU a detection must exceed to count as a hit.
pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// A ground-truth interval with its class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub interval: Interval,
    pub class_id: usize,
}

/// Detector output and ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub snr_db: f64,
    pub detections: Vec<Detection>,
    pub truths: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub detection: usize,
    pub truth: usize,
    pub iou: f64,
}

/// Outcome of matching one frame. Indices refer to the input slices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub matched: Vec<Match>,
    /// Unmatched detections: misses, duplicates and misclassifications.
    pub false_positives: Vec<usize>,
    /// Truths without a matching detection.
    pub missed: Vec<usize>,
    /// Detections that localized a truth but carried the wrong class; also
    /// listed in `false_positives`.
    pub misclassified: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.matched.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_(&self) -> usize {
        self.missed.len()
    }

    /// Whether each detection (by input index) is a true positive.
    pub fn hits(&self, n_dets: usize) -> Vec<bool> {
        let mut hit = vec![false; n_dets];
        for m in &self.matched {
            hit[m.detection] = true;
        }
        hit
    }
}

/// Detection indices by descending score, ties to the lower start.
pub(crate) fn rank(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(
                dets[a]
                    .interval
                    .start()
                    .total_cmp(&dets[b].interval.start()),
            )
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching in descending score order: each detection claims the
/// unmatched truth with the highest IoU above `iou_min` (ties go to the
/// lower truth index). In classful mode a localized detection with the wrong
/// class is then turned into a false positive and its truth into a miss.
pub fn match_detections(
    dets: &[Detection],
    truths: &[Target],
    iou_min: f64,
    classful: bool,
) -> MatchResult {
    let mut taken = vec![false; truths.len()];
    let mut out = MatchResult::default();
    for d in rank(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (t, truth) in truths.iter().enumerate() {
            if taken[t] {
                continue;
            }
            let v = iou(&dets[d].interval, &truth.interval);
            if v > iou_min && best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        match best {
            Some((t, _)) if classful && dets[d].class_id != truths[t].class_id => {
                taken[t] = true;
                out.false_positives.push(d);
                out.misclassified.push(d);
                out.missed.push(t);
            }
            Some((t, v)) => {
                taken[t] = true;
                out.matched.push(Match {
                    detection: d,
                    truth: t,
                    iou: v,
                });
            }
            None => out.false_positives.push(d),
        }
    }
    out.missed.extend((0..truths.len()).filter(|&t| !taken[t]));
    out.missed.sort_unstable();
    out
}

/// `tp / (tp + fp)`, or 1 when nothing was claimed.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `tp / (tp + fn)`, or 0 when there was nothing to find.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// Running totals over many frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Sum of IoUs recorded for true positives.
    pub iou_sum: f64,
}

impl Tally {
    pub fn add(&mut self, m: &MatchResult) {
        self.tp += m.tp();
        self.fp += m.fp();
        self.fn_ += m.fn_();
        self.iou_sum += m.matched.iter().map(|x| x.iou).sum::<f64>();
    }

    pub fn merge(&mut self, other: &Tally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
    }

    /// One IoU record per true positive, false positive and missed truth.
    pub fn records(&self) -> usize {
        self.tp + self.fp + self.fn_
    }

    /// Mean of the recorded IoUs; false positives and misses record zero.
    pub fn miou(&self) -> Result<f64> {
        if self.records() == 0 {
            return Err(Error::Degenerate(
                "mIoU is undefined without detections or truths".into(),
            ));
        }
        Ok(self.iou_sum / self.records() as f64)
    }

    pub fn pd(&self) -> Result<f64> {
        if self.tp + self.fn_ == 0 {
            return Err(Error::Degenerate(
                "Pd is undefined without ground truth".into(),
            ));
        }
        Ok(recall(self.tp, self.fn_))
    }

    /// False alarms over detections; 0 when there are no detections.
    pub fn pfa(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.fp as f64 / (self.tp + self.fp) as f64
        }
    }
}

pub fn tally(frames: &[EvalFrame], iou_min: f64, classful: bool) -> Tally {
    let mut t = Tally::default();
    for f in frames {
        t.add(&match_detections(
            &f.detections,
            &f.truths,
            iou_min,
            classful,
        ));
    }
    t
}

pub fn mean_iou(frames: &[EvalFrame], iou_min: f64, classful: bool) -> Result<f64> {
    tally(frames, iou_min, classful).miou()
}

pub fn prob_detection(m: &MatchResult) -> Result<f64> {
    let mut t = Tally::default();
    t.add(m);
    t.pd()
}

pub fn prob_false_alarm(m: &MatchResult) -> f64 {
    let mut t = Tally::default();
    t.add(m);
    t.pfa()
}
