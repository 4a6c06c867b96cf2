//! Brute-force reference for the detection metrics on tiny instances.
//!
//! Matching is recovered by enumerating every injective assignment of
//! detections to truths and keeping the one whose per-rank outcome sequence
//! is lexicographically best; precision/recall points come from re-matching
//! each score prefix from scratch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specsense::geom::{Detection, Interval};
use specsense::metrics::{
    match_detections, mean_ap, mean_iou, prob_detection, prob_false_alarm, EvalFrame, Target,
    DEFAULT_AP_POINTS, DEFAULT_MAP_CUTOFFS,
};

pub const TOLERANCE: f64 = 1e-9;
const IOU_MIN: f64 = 0.5;
const SCORES: [f64; 13] = [
    0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0,
];

fn overlap(a: &Interval, b: &Interval) -> f64 {
    let inter = (a.end().min(b.end()) - a.start().max(b.start())).max(0.0);
    if inter == 0.0 {
        0.0
    } else {
        inter / (a.len() + b.len() - inter)
    }
}

/// Up to 6 detections and 4 truths on a coarse grid, so equal IoUs and
/// equal scores occur often.
pub fn random_frame(rng: &mut ChaCha8Rng) -> EvalFrame {
    let span = |rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..24) as f64;
        Interval::new(s, s + rng.random_range(1..12) as f64).unwrap()
    };
    let truths = (0..rng.random_range(0..=4))
        .map(|_| Target {
            interval: span(rng),
            class_id: rng.random_range(0..2),
        })
        .collect();
    let detections = (0..rng.random_range(0..=6))
        .map(|_| {
            Detection::new(
                span(rng),
                rng.random_range(0..2),
                SCORES[rng.random_range(0..SCORES.len())],
            )
        })
        .collect();
    EvalFrame {
        snr_db: 0.0,
        detections,
        truths,
    }
}

/// Descending score, then lower start, then input order.
fn ranked(dets: &[Detection]) -> Vec<Detection> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(
                dets[a]
                    .interval
                    .start()
                    .partial_cmp(&dets[b].interval.start())
                    .unwrap(),
            )
            .then(a.cmp(&b))
    });
    idx.into_iter().map(|i| dets[i]).collect()
}

type Assignment = Vec<Option<usize>>;

/// Per-rank key: a match beats no match, higher IoU beats lower, and the
/// lower truth index wins a tie.
fn better(dets: &[Detection], truths: &[Target], x: &Assignment, y: &Assignment) -> bool {
    for (d, (a, b)) in dets.iter().zip(x.iter().zip(y)) {
        let key = |t: &Option<usize>| {
            t.map(|t| (overlap(&d.interval, &truths[t].interval), usize::MAX - t))
        };
        match (key(a), key(b)) {
            (ka, kb) if ka == kb => continue,
            (None, _) => return false,
            (_, None) => return true,
            (Some(ka), Some(kb)) => return ka > kb,
        }
    }
    false
}

fn enumerate(
    dets: &[Detection],
    truths: &[Target],
    cur: &mut Assignment,
    used: &mut [bool],
    best: &mut Option<Assignment>,
) {
    if cur.len() == dets.len() {
        if best.as_ref().is_none_or(|b| better(dets, truths, cur, b)) {
            *best = Some(cur.clone());
        }
        return;
    }
    let d = &dets[cur.len()];
    cur.push(None);
    enumerate(dets, truths, cur, used, best);
    cur.pop();
    for t in 0..truths.len() {
        if !used[t] && overlap(&d.interval, &truths[t].interval) > IOU_MIN {
            used[t] = true;
            cur.push(Some(t));
            enumerate(dets, truths, cur, used, best);
            cur.pop();
            used[t] = false;
        }
    }
}

/// `(matched IoUs, false positives, misses)` for ranked detections.
fn outcome(dets: &[Detection], truths: &[Target], classful: bool) -> (Vec<f64>, usize, usize) {
    let mut best = None;
    enumerate(
        dets,
        truths,
        &mut Vec::new(),
        &mut vec![false; truths.len()],
        &mut best,
    );
    let assignment = best.expect("the empty assignment always exists");
    let mut ious = Vec::new();
    let mut fp = 0;
    for (d, t) in dets.iter().zip(&assignment) {
        match t {
            Some(t) if !classful || d.class_id == truths[*t].class_id => {
                ious.push(overlap(&d.interval, &truths[*t].interval))
            }
            _ => fp += 1,
        }
    }
    let misses = truths.len() - ious.len();
    (ious, fp, misses)
}

fn ap(dets: &[Detection], truths: &[Target], classful: bool) -> f64 {
    let dets = ranked(dets);
    if truths.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    let mut points = Vec::new();
    for k in 1..=dets.len() {
        if k < dets.len() && dets[k].score == dets[k - 1].score {
            continue;
        }
        let (ious, _, _) = outcome(&dets[..k], truths, classful);
        points.push((
            ious.len() as f64 / truths.len() as f64,
            ious.len() as f64 / k as f64,
        ));
    }
    (0..DEFAULT_AP_POINTS)
        .map(|i| {
            let r = i as f64 / (DEFAULT_AP_POINTS - 1) as f64;
            points
                .iter()
                .filter(|p| p.0 >= r)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / DEFAULT_AP_POINTS as f64
}

fn oracle_map(f: &EvalFrame, classful: bool) -> f64 {
    DEFAULT_MAP_CUTOFFS
        .iter()
        .map(|&c| {
            let kept: Vec<Detection> = f
                .detections
                .iter()
                .filter(|d| d.score >= c)
                .copied()
                .collect();
            ap(&kept, &f.truths, classful)
        })
        .sum::<f64>()
        / DEFAULT_MAP_CUTOFFS.len() as f64
}

fn close(name: &str, got: Option<f64>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (None, None) => Ok(()),
        (Some(g), Some(w)) if (g - w).abs() <= TOLERANCE => Ok(()),
        _ => Err(format!("{name}: library {got:?}, oracle {want:?}")),
    }
}

/// Compares every metric on one frame in both matching modes.
pub fn check(f: &EvalFrame) -> Result<(), String> {
    let frames = std::slice::from_ref(f);
    for classful in [false, true] {
        let (ious, fp, misses) = outcome(&ranked(&f.detections), &f.truths, classful);
        let tp = ious.len();
        let records = tp + fp + misses;
        let m = match_detections(&f.detections, &f.truths, IOU_MIN, classful);
        let tag = |what: &str| format!("{what} (classful={classful})");
        close(
            &tag("mAP"),
            mean_ap(
                frames,
                IOU_MIN,
                classful,
                &DEFAULT_MAP_CUTOFFS,
                DEFAULT_AP_POINTS,
            )
            .ok(),
            Some(oracle_map(f, classful)),
        )?;
        close(
            &tag("mIoU"),
            mean_iou(frames, IOU_MIN, classful).ok(),
            (records > 0).then(|| ious.iter().sum::<f64>() / records as f64),
        )?;
        close(
            &tag("Pd"),
            prob_detection(&m).ok(),
            (!f.truths.is_empty()).then(|| tp as f64 / f.truths.len() as f64),
        )?;
        close(
            &tag("Pfa"),
            Some(prob_false_alarm(&m)),
            Some(if f.detections.is_empty() {
                0.0
            } else {
                fp as f64 / f.detections.len() as f64
            }),
        )?;
    }
    Ok(())
}

/// Checks `n` random frames from `seed`; returns the first disagreement.
pub fn run(seed: u64, n: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let f = random_frame(&mut rng);
        check(&f).map_err(|e| format!("instance {i}: {e}\n{f:#?}"))?;
    }
    Ok(())
}
