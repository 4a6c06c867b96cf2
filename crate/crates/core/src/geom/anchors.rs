use super::{encode_regression, iou, Interval, Offsets};
use crate::{Error, Result};

/// Anchor lengths in bins.
pub const DEFAULT_SCALES: [usize; 5] = [32, 64, 128, 256, 512];

/// Anchors laid over a feature map: one anchor per (position, scale).
///
/// Anchor `p * k + s` sits at feature position `p` with scale index `s`,
/// matching the `n x k` layout of the proposal head's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    input_size: usize,
    stride: usize,
    scales: Vec<usize>,
    anchors: Vec<Interval>,
}

impl AnchorGrid {
    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    /// Number of feature positions, `input_size / stride`.
    pub fn positions(&self) -> usize {
        self.input_size / self.stride
    }

    pub fn anchors(&self) -> &[Interval] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Builds the anchor grid. Centers sit at `(i + 0.5) * stride`; anchors are
/// clipped to `[0, input_size]`.
pub fn generate_anchors(input_size: usize, stride: usize, scales: &[usize]) -> Result<AnchorGrid> {
    if stride == 0 || input_size == 0 || !input_size.is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "stride {stride} must be a positive divisor of input size {input_size}"
        )));
    }
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::Config(
            "anchor scales must be non-empty and positive".into(),
        ));
    }
    let size = input_size as f64;
    let mut anchors = Vec::with_capacity(input_size / stride * scales.len());
    for p in 0..input_size / stride {
        let c = (p as f64 + 0.5) * stride as f64;
        for &s in scales {
            let half = s as f64 / 2.0;
            let a = Interval::new(c - half, c + half)?
                .clip(size)
                .expect("anchor center lies inside the input");
            anchors.push(a);
        }
    }
    Ok(AnchorGrid {
        input_size,
        stride,
        scales: scales.to_vec(),
        anchors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive,
    Negative,
    /// Ambiguous overlap; excluded from training.
    Ignore,
}

/// Per-anchor training targets for the proposal head.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnTargets {
    pub labels: Vec<AnchorLabel>,
    /// Set exactly where the label is positive.
    pub regressions: Vec<Option<Offsets>>,
}

impl RpnTargets {
    pub fn count(&self, label: AnchorLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Labels anchors against ground truth: best IoU above `overlap_max` is
/// positive, below `overlap_min` negative, anything between is ignored.
/// The best anchor(s) for every truth are positive regardless of overlap.
/// Positive anchors regress toward their highest-IoU truth.
pub fn assign_rpn_targets(
    grid: &AnchorGrid,
    truths: &[Interval],
    overlap_min: f64,
    overlap_max: f64,
) -> RpnTargets {
    let n = grid.len();
    let mut labels = vec![AnchorLabel::Negative; n];
    let mut regressions = vec![None; n];
    if truths.is_empty() {
        return RpnTargets {
            labels,
            regressions,
        };
    }

    let overlaps: Vec<Vec<f64>> = grid
        .anchors()
        .iter()
        .map(|a| truths.iter().map(|t| iou(a, t)).collect())
        .collect();
    let best_truth: Vec<(usize, f64)> = overlaps
        .iter()
        .map(|row| {
            row.iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
        })
        .collect();

    for (i, &(_, best)) in best_truth.iter().enumerate() {
        labels[i] = if best > overlap_max {
            AnchorLabel::Positive
        } else if best < overlap_min {
            AnchorLabel::Negative
        } else {
            AnchorLabel::Ignore
        };
    }

    for j in 0..truths.len() {
        let best = overlaps.iter().map(|row| row[j]).fold(0.0, f64::max);
        if best <= 0.0 {
            continue;
        }
        for (i, row) in overlaps.iter().enumerate() {
            if row[j] == best {
                labels[i] = AnchorLabel::Positive;
            }
        }
    }

    for i in 0..n {
        if labels[i] == AnchorLabel::Positive {
            let t = &truths[best_truth[i].0];
            regressions[i] = Some(
                encode_regression(&grid.anchors()[i], t).expect("anchors have positive length"),
            );
        }
    }
    RpnTargets {
        labels,
        regressions,
    }
}
