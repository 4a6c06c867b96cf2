//! Randomized interval-geometry invariants, checked together per case so a
//! single runner can report one case count and one wall time.

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use specsense::geom::{
    assign_rpn_targets, decode_clipped, decode_regression, encode_regression, generate_anchors,
    iou, nms, threshold_detections, AnchorLabel, Detection, Interval,
};

const SIZE: f64 = 1024.0;
const SCALES: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone)]
pub struct Case {
    a: (f64, f64),
    b: (f64, f64),
    offsets: [f64; 2],
    dets: Vec<(f64, f64, usize, f64)>,
    overlap: f64,
    p_min: f64,
    stride: usize,
}

fn span() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1000.0f64, 0.5..300.0f64)
}

fn case() -> impl Strategy<Value = Case> {
    (
        span(),
        span(),
        (-3.0..3.0f64, -4.0..4.0f64),
        vec(
            (0.0..1000.0f64, 1.0..150.0f64, 0usize..3, 0.0..1.0f64),
            0..10,
        ),
        0.1..0.9f64,
        0.0..1.0f64,
        prop_oneof![Just(8usize), Just(16), Just(32)],
    )
        .prop_map(|(a, b, (t0, t1), dets, overlap, p_min, stride)| Case {
            a,
            b,
            offsets: [t0, t1],
            dets,
            overlap,
            p_min,
            stride,
        })
}

fn iv((s, l): (f64, f64)) -> Interval {
    Interval::new(s, s + l).expect("positive length")
}

fn check(c: &Case) -> Result<(), TestCaseError> {
    let (a, b) = (iv(c.a), iv(c.b));

    let ab = iou(&a, &b);
    prop_assert_eq!(ab, iou(&b, &a));
    prop_assert!((0.0..=1.0).contains(&ab));
    prop_assert_eq!(iou(&a, &a), 1.0);
    prop_assert_eq!(ab == 0.0, a.end() <= b.start() || b.end() <= a.start());

    let d = decode_regression(&a, encode_regression(&a, &b).unwrap());
    prop_assert!((d.start() - b.start()).abs() < 1e-9 && (d.end() - b.end()).abs() < 1e-9);
    if let Some(clipped) = decode_clipped(&a, c.offsets, SIZE) {
        prop_assert!(clipped.start() >= 0.0 && clipped.end() <= SIZE && clipped.len() > 0.0);
    }

    let dets: Vec<Detection> = c
        .dets
        .iter()
        .map(|&(s, l, class, p)| Detection::new(Interval::new(s, s + l).unwrap(), class, p))
        .collect();
    let kept = nms(&dets, c.overlap);
    prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
    for (i, x) in kept.iter().enumerate() {
        prop_assert!(dets.contains(x));
        for y in &kept[..i] {
            prop_assert!(x.class_id != y.class_id || iou(&x.interval, &y.interval) <= c.overlap);
        }
    }
    prop_assert_eq!(nms(&kept, c.overlap), kept.clone());
    let above = threshold_detections(&dets, c.p_min);
    prop_assert!(above.iter().all(|d| d.score >= c.p_min));
    prop_assert_eq!(
        above.len(),
        dets.iter().filter(|d| d.score >= c.p_min).count()
    );

    let grid = generate_anchors(SIZE as usize, c.stride, &SCALES).unwrap();
    prop_assert_eq!(grid.len(), SIZE as usize / c.stride * SCALES.len());
    for (i, anchor) in grid.anchors().iter().enumerate() {
        prop_assert!(anchor.start() >= 0.0 && anchor.end() <= SIZE);
        let center = (i / SCALES.len()) as f64 * c.stride as f64 + c.stride as f64 / 2.0;
        prop_assert!(anchor.start() <= center && center <= anchor.end());
    }
    let truths = [a.clip(SIZE), b.clip(SIZE)]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let targets = assign_rpn_targets(&grid, &truths, 0.3, 0.7);
    for t in &truths {
        let best = grid.anchors().iter().map(|x| iou(x, t)).fold(0.0, f64::max);
        if best > 0.0 {
            prop_assert!(grid
                .anchors()
                .iter()
                .zip(&targets.labels)
                .any(|(x, &l)| l == AnchorLabel::Positive && iou(x, t) == best));
        }
    }
    for (l, r) in targets.labels.iter().zip(&targets.regressions) {
        prop_assert_eq!(*l == AnchorLabel::Positive, r.is_some());
    }
    Ok(())
}

/// Runs `cases` random cases from a fixed seed. Returns the failure message
/// of the first counterexample, if any.
pub fn run(cases: u32) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&case(), |c| check(&c))
        .map_err(|e| e.to_string())
}
