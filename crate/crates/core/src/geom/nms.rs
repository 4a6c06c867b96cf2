use std::cmp::Ordering;

use super::{iou, Detection};

fn by_score_desc(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.start().total_cmp(&b.interval.start()))
        .then(a.interval.end().total_cmp(&b.interval.end()))
}

/// Sorts detections by descending score; ties go to the lower start.
pub fn sort_by_score(dets: &mut [Detection]) {
    dets.sort_by(by_score_desc);
}

/// Greedy non-maximum suppression within each class. A detection is
/// dropped when its IoU with an already kept, higher-ranked detection of
/// the same class exceeds `overlap`. Output is sorted by score.
pub fn nms(dets: &[Detection], overlap: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_by_score(&mut sorted);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.interval, &d.interval) > overlap);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Keeps detections with `score >= p_min`.
pub fn threshold_detections(dets: &[Detection], p_min: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= p_min).copied().collect()
}
