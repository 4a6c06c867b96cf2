use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{mean_ap, tally, EvalFrame, DEFAULT_AP_POINTS, DEFAULT_IOU_MIN, DEFAULT_MAP_CUTOFFS};
use crate::geom::threshold_detections;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_min: f64,
    /// Score threshold for mIoU, Pd and Pfa.
    pub p_min: f64,
    /// Score cutoffs averaged by mAP.
    pub map_cutoffs: Vec<f64>,
    pub ap_points: usize,
    /// Require the detected class to match the truth's.
    pub classful: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_min: DEFAULT_IOU_MIN,
            p_min: 0.9,
            map_cutoffs: DEFAULT_MAP_CUTOFFS.to_vec(),
            ap_points: DEFAULT_AP_POINTS,
            classful: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrRow {
    pub snr_db: f64,
    pub frames: usize,
    pub map: f64,
    pub miou: f64,
    pub pd: f64,
    pub pfa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: SnrRow,
    pub per_snr: Vec<SnrRow>,
    /// Mean seconds per frame, when measured.
    pub mean_inference_s: Option<f64>,
}

impl EvalReport {
    pub fn map(&self) -> f64 {
        self.overall.map
    }

    pub fn miou(&self) -> f64 {
        self.overall.miou
    }

    pub fn pd(&self) -> f64 {
        self.overall.pd
    }

    pub fn pfa(&self) -> f64 {
        self.overall.pfa
    }

    /// One row per SNR. Timing is appended when present.
    pub fn to_csv(&self, method: &str) -> String {
        let timing = self.mean_inference_s.is_some();
        let mut s = String::from("method,snr_db,frames,map,miou,pd,pfa");
        if timing {
            s.push_str(",mean_inference_s");
        }
        s.push('\n');
        let mut row = |snr: String, r: &SnrRow| {
            let _ = write!(
                s,
                "{method},{snr},{},{:.6},{:.6},{:.6},{:.6}",
                r.frames, r.map, r.miou, r.pd, r.pfa
            );
            if let Some(t) = self.mean_inference_s {
                let _ = write!(s, ",{t:.9}");
            }
            s.push('\n');
        };
        for r in &self.per_snr {
            row(format!("{}", r.snr_db), r);
        }
        s
    }

    /// Pooled scores over every SNR as a short text block.
    pub fn summary(&self, method: &str) -> String {
        let o = &self.overall;
        let mut s = format!(
            "{method}: {} frames, mAP {:.4}, mIoU {:.4}, Pd {:.4}, Pfa {:.4}",
            o.frames, o.map, o.miou, o.pd, o.pfa
        );
        if let Some(t) = self.mean_inference_s {
            let _ = write!(s, ", {:.3} ms/frame", t * 1e3);
        }
        s
    }
}

fn summarize(frames: &[EvalFrame], cfg: &EvalConfig, snr_db: f64) -> Result<SnrRow> {
    let map = mean_ap(
        frames,
        cfg.iou_min,
        cfg.classful,
        &cfg.map_cutoffs,
        cfg.ap_points,
    )?;
    let kept: Vec<EvalFrame> = frames
        .iter()
        .map(|f| EvalFrame {
            detections: threshold_detections(&f.detections, cfg.p_min),
            ..f.clone()
        })
        .collect();
    let t = tally(&kept, cfg.iou_min, cfg.classful);
    Ok(SnrRow {
        snr_db,
        frames: frames.len(),
        map,
        miou: t.miou()?,
        pd: t.pd()?,
        pfa: t.pfa(),
    })
}

/// Scores every frame (detections carry raw scores; thresholding happens
/// here) overall and per SNR.
pub fn evaluate(
    frames: &[EvalFrame],
    cfg: &EvalConfig,
    mean_inference_s: Option<f64>,
) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::Degenerate("nothing to evaluate".into()));
    }
    let mut groups: BTreeMap<u64, (f64, Vec<EvalFrame>)> = BTreeMap::new();
    for f in frames {
        // Order-preserving key for finite and infinite SNRs.
        let bits = f.snr_db.to_bits();
        let key = if f.snr_db.is_sign_negative() {
            !bits
        } else {
            bits | 1 << 63
        };
        groups
            .entry(key)
            .or_insert_with(|| (f.snr_db, Vec::new()))
            .1
            .push(f.clone());
    }
    let per_snr = groups
        .values()
        .map(|(snr, fs)| summarize(fs, cfg, *snr))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        overall: summarize(frames, cfg, f64::NAN)?,
        per_snr,
        mean_inference_s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTiming {
    pub name: String,
    pub mean_s: f64,
    /// `mean_s` over the slowest method's mean.
    pub normalized: f64,
}

/// Normalizes per-frame inference times to the slowest method.
pub fn timing_report(methods: &[(String, f64)]) -> Result<Vec<MethodTiming>> {
    if methods.len() < 2 {
        return Err(Error::Config(
            "timing comparison needs at least two methods".into(),
        ));
    }
    if methods.iter().any(|(_, t)| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Input("mean inference times must be positive".into()));
    }
    let slowest = methods.iter().map(|(_, t)| *t).fold(0.0, f64::max);
    Ok(methods
        .iter()
        .map(|(name, t)| MethodTiming {
            name: name.clone(),
            mean_s: *t,
            normalized: t / slowest,
        })
        .collect())
}
