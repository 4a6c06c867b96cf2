use super::{match_detections, EvalFrame};
use crate::geom::threshold_detections;
use crate::{Error, Result};

/// Recall levels sampled by interpolated AP.
pub const DEFAULT_AP_POINTS: usize = 11;

/// Score cutoffs averaged by mAP: 0.0, 0.1, ..., 0.9.
pub const DEFAULT_MAP_CUTOFFS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Operating point after admitting every detection scoring at least `score`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall sweep over all frames. Detections with equal scores
/// enter together, so tied scores yield a single point.
pub fn pr_curve(frames: &[EvalFrame], iou_min: f64, classful: bool) -> (Vec<PrPoint>, usize) {
    let mut scored: Vec<(f64, bool)> = Vec::new();
    let mut n_truths = 0;
    for f in frames {
        n_truths += f.truths.len();
        let m = match_detections(&f.detections, &f.truths, iou_min, classful);
        let hits = m.hits(f.detections.len());
        scored.extend(f.detections.iter().zip(hits).map(|(d, h)| (d.score, h)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            score,
            recall: super::recall(tp, n_truths - tp),
            precision: super::precision(tp, fp),
        });
    }
    (points, n_truths)
}

/// Average over `points` evenly spaced recall levels of the best precision
/// reached at or beyond each level. With no ground truth the AP is 1 when
/// nothing was detected and 0 otherwise.
pub fn interpolated_ap(
    frames: &[EvalFrame],
    iou_min: f64,
    classful: bool,
    points: usize,
) -> Result<f64> {
    if points < 2 {
        return Err(Error::Config(format!(
            "AP needs at least 2 recall points, got {points}"
        )));
    }
    let (curve, n_truths) = pr_curve(frames, iou_min, classful);
    if n_truths == 0 {
        return Ok(if curve.is_empty() { 1.0 } else { 0.0 });
    }
    let total: f64 = (0..points)
        .map(|i| {
            let r = i as f64 / (points - 1) as f64;
            curve
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / points as f64)
}

/// Mean of the interpolated AP after discarding detections below each cutoff.
pub fn mean_ap(
    frames: &[EvalFrame],
    iou_min: f64,
    classful: bool,
    cutoffs: &[f64],
    points: usize,
) -> Result<f64> {
    if cutoffs.is_empty() || cutoffs.iter().any(|c| !(0.0..1.0).contains(c)) {
        return Err(Error::Config(
            "mAP cutoffs must be a non-empty subset of [0, 1)".into(),
        ));
    }
    let mut sum = 0.0;
    for &c in cutoffs {
        let kept: Vec<EvalFrame> = frames
            .iter()
            .map(|f| EvalFrame {
                detections: threshold_detections(&f.detections, c),
                ..f.clone()
            })
            .collect();
        sum += interpolated_ap(&kept, iou_min, classful, points)?;
    }
    Ok(sum / cutoffs.len() as f64)
}
