//! Frame-level runners shared by `eval`, `bench` and the acceptance tests.

use std::thread;
use std::time::Instant;

use specsense::amc::{classify_detections, AmcClass, AmcModel};
use specsense::energy::{energy_detect, EnergyDetectorConfig};
use specsense::frcnn::{DetectConfig, FrcnnModel};
use specsense::geom::Detection;
use specsense::metrics::{EvalFrame, Target};
use specsense::synth::DatasetRecord;
use specsense::{Error, Result};

/// Detections for every record plus the mean per-frame inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRun {
    pub frames: Vec<EvalFrame>,
    pub mean_inference_s: f64,
}

/// How truths are labelled for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthLabels {
    /// Every truth is class 0, matching single-class detectors.
    Generic,
    /// Truths carry their modulation's classifier index.
    Modulation,
}

pub fn targets(record: &DatasetRecord, labels: TruthLabels) -> Vec<Target> {
    record
        .truths
        .iter()
        .map(|t| Target {
            interval: t.interval,
            class_id: match labels {
                TruthLabels::Generic => 0,
                TruthLabels::Modulation => AmcClass::from(t.scheme).index(),
            },
        })
        .collect()
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Runs `detect` on every record, timing each call on its own.
pub fn run_frames(
    records: &[DatasetRecord],
    labels: TruthLabels,
    jobs: usize,
    detect: impl Fn(&DatasetRecord) -> Result<Vec<Detection>> + Sync,
) -> Result<FrameRun> {
    if records.is_empty() {
        return Err(Error::Input("dataset has no records".into()));
    }
    let results = par_map(records, jobs, |r| {
        let t = Instant::now();
        let dets = detect(r);
        (dets, t.elapsed().as_secs_f64())
    });
    let mut frames = Vec::with_capacity(records.len());
    let mut total = 0.0;
    for (r, (dets, secs)) in records.iter().zip(results) {
        total += secs;
        frames.push(EvalFrame {
            snr_db: r.snr_db,
            detections: dets?,
            truths: targets(r, labels),
        });
    }
    Ok(FrameRun {
        frames,
        mean_inference_s: total / records.len() as f64,
    })
}

pub fn energy_frames(
    records: &[DatasetRecord],
    cfg: &EnergyDetectorConfig,
    jobs: usize,
) -> Result<FrameRun> {
    cfg.validate()?;
    run_frames(records, TruthLabels::Generic, jobs, |r| {
        energy_detect(&r.spectrum, cfg)
    })
}

/// Detector output before score thresholding, which the metrics apply.
pub fn frcnn_frames(
    records: &[DatasetRecord],
    model: &FrcnnModel,
    cfg: &DetectConfig,
    jobs: usize,
) -> Result<FrameRun> {
    run_frames(records, TruthLabels::Generic, jobs, |r| {
        model.detect_all(&r.spectrum, cfg)
    })
}

/// Detector output relabelled by the classifier, with `NoSignal` dropped.
/// Truths carry their modulation class so classful scoring is meaningful.
pub fn frcnn_amc_frames(
    records: &[DatasetRecord],
    frcnn: &FrcnnModel,
    amc: &AmcModel,
    cfg: &DetectConfig,
    jobs: usize,
) -> Result<FrameRun> {
    let n = frcnn.config().fft_size;
    run_frames(records, TruthLabels::Modulation, jobs, |r| {
        let bb = r.baseband.as_ref().ok_or_else(|| {
            Error::Input(format!("record {} carries no baseband samples", r.seed))
        })?;
        let dets = frcnn.detect_all(&r.spectrum, cfg)?;
        Ok(classify_detections(bb, &dets, n, amc)?
            .into_iter()
            .filter(|c| c.class != AmcClass::NoSignal)
            .map(|c| c.detection)
            .collect())
    })
}
