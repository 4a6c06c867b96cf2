use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specsense::amc::{make_amc_dataset, train_amc, AmcDatasetConfig, AmcModel, AmcTrainConfig};
use specsense::energy::EnergyDetectorConfig;
use specsense::frcnn::{
    Alternation, DetectConfig, FeatureExtractorConfig, FrcnnModel, ModelConfig, TrainConfig,
    Trainer,
};
use specsense::metrics::{evaluate, pr_curve, timing_report, EvalConfig};
use specsense::synth::{
    acquisition_cost, generate_dataset, read_dataset, sweep_prefix, DatasetRecord, RenderConfig,
};

use crate::args::{
    AlternationArg, BenchArgs, CostArgs, EvalArgs, Method, SynthArgs, TrainAmcArgs, TrainCommand,
    TrainFrcnnArgs,
};
use crate::eval::{energy_frames, frcnn_amc_frames, frcnn_frames};

/// Writes `body` after a `# specsense ...` line recording the invocation.
fn emit(out: Option<&Path>, provenance: &str, body: &str) -> anyhow::Result<()> {
    let text = format!("{provenance}\n{body}");
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_records(
    prefix: &Path,
) -> anyhow::Result<(specsense::synth::DatasetHeader, Vec<DatasetRecord>)> {
    let ds =
        read_dataset(prefix).with_context(|| format!("reading dataset {}", prefix.display()))?;
    ensure!(
        !ds.records.is_empty(),
        "dataset {} has no records",
        prefix.display()
    );
    Ok((ds.header, ds.records))
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    ensure!(a.n > 0, "--n must be positive");
    let cfg = RenderConfig {
        fft_size: a.fft_size,
        keep_baseband: a.with_baseband,
        ..RenderConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for p in generate_dataset(a.n, &a.snr, &mut rng, &a.out, a.sample_rate, &cfg)? {
        eprintln!("wrote {} ({} records)", p.display(), a.n);
    }
    Ok(())
}

pub fn train(cmd: &TrainCommand, provenance: &str) -> anyhow::Result<()> {
    match cmd {
        TrainCommand::Frcnn(a) => train_frcnn(a, provenance),
        TrainCommand::Amc(a) => train_classifier(a, provenance),
    }
}

fn train_frcnn(a: &TrainFrcnnArgs, provenance: &str) -> anyhow::Result<()> {
    let (header, records) = load_records(&a.data)?;
    let model_cfg = ModelConfig {
        features: FeatureExtractorConfig {
            family: a.family,
            stride: a.stride,
            downscaled: a.downscaled,
        },
        fft_size: header.fft_size,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        epoch_length: a.epoch_len,
        lr: a.lr,
        seed: a.seed,
        alternation: match a.alternation {
            AlternationArg::PerSample => Alternation::PerSample,
            AlternationArg::PerEpoch => Alternation::PerEpoch,
        },
        ..TrainConfig::default()
    };
    let model = FrcnnModel::new(model_cfg, a.seed)?;
    eprintln!(
        "{} parameters, {} training frames",
        model.num_params(),
        records.len()
    );
    let mut trainer = Trainer::new(model, train_cfg)?;
    trainer.run(&records, |r| {
        eprintln!(
            "epoch {}: rpn_cls {:.5} rpn_reg {:.5} cls {:.5} reg {:.5}",
            r.epoch, r.rpn_cls, r.rpn_reg, r.cls, r.reg
        )
    })?;
    let (model, history) = trainer.into_parts();
    model
        .save(&a.out)
        .with_context(|| format!("saving {}", a.out.display()))?;
    let mut csv = String::from("epoch,rpn_cls_loss,rpn_reg_loss,cls_loss,reg_loss\n");
    for r in &history {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.epoch, r.rpn_cls, r.rpn_reg, r.cls, r.reg
        );
    }
    let loss_csv = a
        .loss_csv
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    emit(Some(&loss_csv), provenance, &csv)
}

fn train_classifier(a: &TrainAmcArgs, provenance: &str) -> anyhow::Result<()> {
    ensure!(
        (0.0..1.0).contains(&a.val_fraction),
        "--val-fraction must be in [0, 1), got {}",
        a.val_fraction
    );
    let (header, records) = load_records(&a.data)?;
    ensure!(
        header.has_baseband,
        "{} has no baseband samples; regenerate it with --with-baseband",
        a.data.display()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut clips = make_amc_dataset(&records, &AmcDatasetConfig::default(), &mut rng)?;
    clips.shuffle(&mut rng);
    let n_val = (clips.len() as f64 * a.val_fraction).round() as usize;
    let val = clips.split_off(clips.len() - n_val);
    let mut cfg = AmcTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        seed: a.seed,
        ..AmcTrainConfig::default()
    };
    cfg.model.input_len = clips.first().map_or(header.fft_size, |c| c.len());
    eprintln!("{} training clips, {} held out", clips.len(), val.len());
    let (model, history) = train_amc(&clips, &val, &cfg, |e| {
        let val = e
            .val_accuracy
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "epoch {}: loss {:.5} train_acc {:.4} val_acc {val}",
            e.epoch, e.loss, e.train_accuracy
        );
    })?;
    model
        .save(&a.out)
        .with_context(|| format!("saving {}", a.out.display()))?;
    let mut csv = String::from("epoch,loss,train_accuracy,val_accuracy\n");
    for e in &history {
        let val = e.val_accuracy.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(csv, "{},{},{},{val}", e.epoch, e.loss, e.train_accuracy);
    }
    let path = a
        .history_csv
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".history.csv"));
    emit(Some(&path), provenance, &csv)
}

fn load_frcnn(path: Option<&PathBuf>) -> anyhow::Result<FrcnnModel> {
    let p = path.context("--model is required for this method")?;
    FrcnnModel::load(p).with_context(|| format!("loading detector {}", p.display()))
}

pub fn eval(a: &EvalArgs, provenance: &str) -> anyhow::Result<()> {
    ensure!(a.jobs > 0, "--jobs must be positive");
    if a.classful && a.method != Method::FrcnnAmc {
        bail!("--classful needs class labels; only frcnn+amc produces them");
    }
    let prefixes = match &a.snr {
        Some(spec) => spec
            .values()
            .into_iter()
            .map(|v| sweep_prefix(&a.data, v))
            .collect(),
        None => vec![a.data.clone()],
    };
    let mut records = Vec::new();
    for p in &prefixes {
        records.extend(load_records(p)?.1);
    }
    let detect = DetectConfig {
        p_min: a.p_min,
        ..DetectConfig::default()
    };
    let run = match a.method {
        Method::Energy => energy_frames(&records, &EnergyDetectorConfig::default(), a.jobs)?,
        Method::Frcnn => frcnn_frames(&records, &load_frcnn(a.model.as_ref())?, &detect, a.jobs)?,
        Method::FrcnnAmc => {
            let frcnn = load_frcnn(a.model.as_ref())?;
            let p = a.amc.as_ref().context("--amc is required for frcnn+amc")?;
            let amc =
                AmcModel::load(p).with_context(|| format!("loading classifier {}", p.display()))?;
            frcnn_amc_frames(&records, &frcnn, &amc, &detect, a.jobs)?
        }
    };
    let cfg = EvalConfig {
        iou_min: a.iou_min,
        p_min: a.p_min,
        classful: a.classful,
        ..EvalConfig::default()
    };
    let report = evaluate(
        &run.frames,
        &cfg,
        a.with_timing.then_some(run.mean_inference_s),
    )?;
    emit(
        a.out.as_deref(),
        provenance,
        &report.to_csv(a.method.name()),
    )?;
    eprintln!("{}", report.summary(a.method.name()));
    if let Some(p) = &a.pr_out {
        let (points, truths) = pr_curve(&run.frames, a.iou_min, a.classful);
        let mut csv = format!("# truths={truths}\nscore,recall,precision\n");
        for pt in points {
            let _ = writeln!(csv, "{},{},{}", pt.score, pt.recall, pt.precision);
        }
        emit(Some(p), provenance, &csv)?;
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn bench(a: &BenchArgs, provenance: &str) -> anyhow::Result<()> {
    ensure!(
        a.frames > 0 && a.repeat > 0,
        "--frames and --repeat must be positive"
    );
    let (_, mut records) = load_records(&a.data)?;
    records.truncate(a.frames);
    let model = load_frcnn(Some(&a.model))?;
    let detect = DetectConfig::default();
    let energy_cfg = EnergyDetectorConfig::default();
    let (mut energy, mut frcnn) = (Vec::new(), Vec::new());
    for _ in 0..a.repeat {
        energy.push(energy_frames(&records, &energy_cfg, 1)?.mean_inference_s);
        frcnn.push(frcnn_frames(&records, &model, &detect, 1)?.mean_inference_s);
    }
    let stats = [("energy", mean_std(&energy)), ("frcnn", mean_std(&frcnn))];
    let timing = timing_report(
        &stats
            .iter()
            .map(|(n, (m, _))| (n.to_string(), *m))
            .collect::<Vec<_>>(),
    )?;
    let mut csv = String::from("method,frames,mean_s,std_s,normalized\n");
    for (t, (_, (_, std))) in timing.iter().zip(&stats) {
        let _ = writeln!(
            csv,
            "{},{},{:.9},{:.9},{:.4}",
            t.name,
            records.len(),
            t.mean_s,
            std,
            t.normalized
        );
    }
    emit(a.out.as_deref(), provenance, &csv)
}

pub fn cost(a: &CostArgs, provenance: &str) -> anyhow::Result<()> {
    let mut csv = String::from("input,samples,seconds\n");
    for (name, spectrogram) in [("frame", false), ("spectrogram", true)] {
        let c = acquisition_cost(a.sample_rate, a.fft_size, spectrogram)?;
        let _ = writeln!(csv, "{name},{},{}", c.samples, c.seconds);
    }
    emit(a.out.as_deref(), provenance, &csv)
}
