use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{isolate_signal, AmcClip};
use super::AmcClass;
use crate::dsp::{fft_db, BasebandFrame};
use crate::frcnn::{DetectConfig, FrcnnModel};
use crate::geom::Detection;
use crate::nn::{
    softmax_cross_entropy, softmax_rows, Adam, AdamConfig, BatchNorm, Checkpoint, Conv1d,
    FlushSubnormals, Layer, Linear, MaxPool2, Mode, Param, Parameterized, Relu, Sequential, Shape,
    Tensor,
};
use crate::{Error, Result};

/// Checkpoint kind tag for classifier weights.
pub const AMC_CHECKPOINT_KIND: &str = "amc";

/// Classifier shape: `blocks` of conv, ReLU, batch norm and 2x pooling,
/// then one dense softmax layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AmcConfig {
    /// Complex samples per clip.
    pub input_len: usize,
    pub filters: usize,
    pub kernel: usize,
    pub blocks: usize,
}

impl Default for AmcConfig {
    fn default() -> Self {
        Self {
            input_len: crate::FFT_SIZE,
            filters: 32,
            kernel: 7,
            blocks: 4,
        }
    }
}

impl AmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0
            || self.blocks > 16
            || self.filters == 0
            || self.kernel.is_multiple_of(2)
        {
            return Err(Error::Config(format!("invalid classifier shape {self}")));
        }
        let cells = self.input_len >> self.blocks;
        if cells == 0 || cells << self.blocks != self.input_len {
            return Err(Error::Config(format!(
                "input length {} is not divisible by 2^{}",
                self.input_len, self.blocks
            )));
        }
        Ok(())
    }

    fn flat_width(&self) -> usize {
        (self.input_len >> self.blocks) * self.filters
    }
}

impl fmt::Display for AmcConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "input_len={} filters={} kernel={} blocks={}",
            self.input_len, self.filters, self.kernel, self.blocks
        )
    }
}

impl FromStr for AmcConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = AmcConfig::default();
        for field in s.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| {
                Error::Config(format!("malformed classifier config field {field:?}"))
            })?;
            let v: usize = v.parse().map_err(|_| {
                Error::Config(format!("bad value in classifier config field {field:?}"))
            })?;
            match k {
                "input_len" => cfg.input_len = v,
                "filters" => cfg.filters = v,
                "kernel" => cfg.kernel = v,
                "blocks" => cfg.blocks = v,
                _ => {
                    return Err(Error::Config(format!(
                        "unknown classifier config key {k:?}"
                    )))
                }
            }
        }
        if cfg.input_len > 1 << 20 || cfg.filters > 4096 || cfg.kernel > 255 {
            return Err(Error::Config("classifier config out of range".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Modulation classifier over isolated I/Q clips.
pub struct AmcModel {
    config: AmcConfig,
    features: Sequential<f32>,
    head: Linear<f32>,
}

impl AmcModel {
    pub fn new(config: AmcConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Sequential::new();
        let mut cin = 2;
        for i in 1..=config.blocks {
            features.push(Conv1d::new(
                &format!("amc.block{i}.conv"),
                cin,
                config.filters,
                config.kernel,
                &mut rng,
            )?);
            features.push(Relu::new());
            features.push(BatchNorm::new(&format!("amc.block{i}.bn"), config.filters));
            features.push(MaxPool2::new());
            cin = config.filters;
        }
        let head = Linear::new("amc.fc", config.flat_width(), AmcClass::COUNT, &mut rng)?;
        Ok(Self {
            config,
            features,
            head,
        })
    }

    pub fn config(&self) -> &AmcConfig {
        &self.config
    }

    fn batch(&self, clips: &[&AmcClip]) -> Result<Tensor<f32>> {
        let n = self.config.input_len;
        let mut data = Vec::with_capacity(clips.len() * 2 * n);
        for c in clips {
            if c.len() != n {
                return Err(Error::Input(format!(
                    "classifier expects {n}-sample clips, got {}",
                    c.len()
                )));
            }
            data.extend_from_slice(&c.iq);
        }
        Tensor::from_vec(Shape::new(clips.len(), n, 2), data)
    }

    fn flatten(&self, t: Tensor<f32>) -> Result<Tensor<f32>> {
        let b = t.shape().batch;
        t.reshape(Shape::new(b, 1, self.config.flat_width()))
    }

    /// Class probabilities, one row of [`AmcClass::COUNT`] per clip.
    pub fn probabilities(&self, clips: &[&AmcClip]) -> Result<Vec<Vec<f32>>> {
        if clips.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.batch(clips)?;
        let h = self.flatten(self.features.infer(&x)?)?;
        let logits = self.head.infer(&h)?;
        Ok(softmax_rows(logits.data(), AmcClass::COUNT)
            .chunks(AmcClass::COUNT)
            .map(<[f32]>::to_vec)
            .collect())
    }

    /// Most probable class and its probability for each clip.
    pub fn predict(&self, clips: &[&AmcClip]) -> Result<Vec<(AmcClass, f64)>> {
        Ok(self
            .probabilities(clips)?
            .into_iter()
            .map(|p| {
                let (k, &v) = p
                    .iter()
                    .enumerate()
                    .fold((0, &f32::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    });
                (AmcClass::ALL[k], v as f64)
            })
            .collect())
    }

    /// Fraction of clips whose predicted class matches the label.
    pub fn accuracy(&self, clips: &[AmcClip]) -> Result<f64> {
        if clips.is_empty() {
            return Err(Error::Input("accuracy of an empty clip set".into()));
        }
        let mut correct = 0usize;
        for chunk in clips.chunks(256) {
            let refs: Vec<&AmcClip> = chunk.iter().collect();
            correct += self
                .predict(&refs)?
                .iter()
                .zip(chunk)
                .filter(|(p, c)| p.0 == c.label)
                .count();
        }
        Ok(correct as f64 / clips.len() as f64)
    }

    /// Confusion counts, `[truth][predicted]`.
    pub fn confusion(
        &self,
        clips: &[AmcClip],
    ) -> Result<[[usize; AmcClass::COUNT]; AmcClass::COUNT]> {
        let mut m = [[0usize; AmcClass::COUNT]; AmcClass::COUNT];
        for chunk in clips.chunks(256) {
            let refs: Vec<&AmcClip> = chunk.iter().collect();
            for (p, c) in self.predict(&refs)?.iter().zip(chunk) {
                m[c.label.index()][p.0.index()] += 1;
            }
        }
        Ok(m)
    }

    /// One optimizer step on a mini-batch; returns the mean loss and the
    /// number of correct predictions.
    fn train_step(&mut self, clips: &[&AmcClip], opt: &mut Adam<f32>) -> Result<(f64, usize)> {
        let x = self.batch(clips)?;
        let f = self.features.forward(&x, Mode::Train)?;
        let fshape = f.shape();
        let h = self.flatten(f)?;
        let logits = self.head.forward(&h, Mode::Train)?;
        if !logits.is_finite() {
            return Err(Error::Divergence(
                "classifier produced non-finite logits".into(),
            ));
        }
        let labels: Vec<usize> = clips.iter().map(|c| c.label.index()).collect();
        let (loss, probs, dlogits) = softmax_cross_entropy(logits.data(), AmcClass::COUNT, &labels);
        let correct = probs
            .chunks(AmcClass::COUNT)
            .zip(&labels)
            .filter(|(p, &l)| p.iter().all(|&v| v <= p[l]))
            .count();
        let dh = self
            .head
            .backward(&Tensor::from_vec(logits.shape(), dlogits)?)?;
        self.features.backward(&dh.reshape(fshape)?)?;
        let mut params = self.params_mut();
        opt.step(&mut params)?;
        Ok((loss as f64, correct))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(AMC_CHECKPOINT_KIND, &self.config.to_string(), &self.state())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != AMC_CHECKPOINT_KIND {
            return Err(Error::Format(format!(
                "expected an {AMC_CHECKPOINT_KIND} checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        let mut model = Self::new(ckpt.config.parse()?, 0)?;
        ckpt.restore(model.state_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Parameterized<f32> for AmcModel {
    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.features.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    fn state(&self) -> Vec<&Param<f32>> {
        let mut v = self.features.state();
        v.extend(self.head.state());
        v
    }

    fn state_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.features.state_mut();
        v.extend(self.head.state_mut());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcTrainConfig {
    pub model: AmcConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AmcTrainConfig {
    fn default() -> Self {
        Self {
            model: AmcConfig::default(),
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Trains a fresh classifier with cross-entropy and Adam, reporting each
/// epoch through `on_epoch`.
pub fn train_amc(
    train: &[AmcClip],
    val: &[AmcClip],
    config: &AmcTrainConfig,
    mut on_epoch: impl FnMut(&AmcEpoch),
) -> Result<(AmcModel, Vec<AmcEpoch>)> {
    if train.is_empty() {
        return Err(Error::Input("classifier training set is empty".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 || !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(Error::Config(format!(
            "invalid classifier training settings {config:?}"
        )));
    }
    let _flush = FlushSubnormals::enable();
    let mut model = AmcModel::new(config.model, config.seed)?;
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.params_mut(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&AmcClip> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, ok) = model.train_step(&batch, &mut opt)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "classifier loss became {loss} in epoch {epoch}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            correct += ok;
        }
        let record = AmcEpoch {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy: if val.is_empty() {
                None
            } else {
                Some(model.accuracy(val)?)
            },
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok((model, history))
}

/// A detection relabelled by the modulation classifier. The detection's
/// `class_id` is the class index and its score is the detector's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedDetection {
    pub detection: Detection,
    pub class: AmcClass,
    pub class_probability: f64,
}

/// Isolates and classifies each detection; nothing is dropped.
pub fn classify_detections(
    baseband: &BasebandFrame,
    detections: &[Detection],
    fft_size: usize,
    amc: &AmcModel,
) -> Result<Vec<ClassifiedDetection>> {
    let clips = detections
        .iter()
        .map(|d| {
            Ok(AmcClip::from_frame(
                &isolate_signal(baseband, d, fft_size)?,
                AmcClass::NoSignal,
                f64::NAN,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&AmcClip> = clips.iter().collect();
    Ok(detections
        .iter()
        .zip(amc.predict(&refs)?)
        .map(|(d, (class, p))| ClassifiedDetection {
            detection: Detection::new(d.interval, class.index(), d.score),
            class,
            class_probability: p,
        })
        .collect())
}

/// Detects transmissions in `baseband`, classifies each one, and drops
/// those labelled [`AmcClass::NoSignal`].
pub fn detect_and_classify(
    baseband: &BasebandFrame,
    frcnn: &FrcnnModel,
    amc: &AmcModel,
    detect: &DetectConfig,
) -> Result<Vec<ClassifiedDetection>> {
    let n = frcnn.config().fft_size;
    let spectrum = fft_db(baseband, n)?;
    let dets = frcnn.detect(&spectrum, detect)?;
    Ok(classify_detections(baseband, &dets, n, amc)?
        .into_iter()
        .filter(|c| c.class != AmcClass::NoSignal)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{make_amc_dataset, AmcDatasetConfig};
    use crate::synth::{generate_records, RenderConfig, SnrSpec};

    fn small() -> AmcConfig {
        AmcConfig {
            input_len: 256,
            filters: 8,
            kernel: 7,
            blocks: 2,
        }
    }

    fn clip(label: AmcClass, seed: u64) -> AmcClip {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AmcClip {
            iq: (0..512).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label,
            snr_db: 0.0,
        }
    }

    #[test]
    fn config_string_round_trip() {
        let c = small();
        assert_eq!(c.to_string().parse::<AmcConfig>().unwrap(), c);
        for bad in [
            "blocks=0",
            "input_len=100 blocks=4",
            "kernel=4",
            "depth=3",
            "filters",
        ] {
            assert!(bad.parse::<AmcConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn probabilities_are_distributions() {
        let m = AmcModel::new(small(), 1).unwrap();
        let clips = [clip(AmcClass::Bpsk, 1), clip(AmcClass::Qpsk, 2)];
        let refs: Vec<&AmcClip> = clips.iter().collect();
        for p in m.probabilities(&refs).unwrap() {
            assert_eq!(p.len(), AmcClass::COUNT);
            assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
        assert!(m.probabilities(&[]).unwrap().is_empty());
    }

    #[test]
    fn wrong_clip_length_is_rejected() {
        let m = AmcModel::new(AmcConfig::default(), 1).unwrap();
        let c = clip(AmcClass::Bpsk, 1);
        assert!(matches!(m.predict(&[&c]), Err(Error::Input(_))));
    }

    #[test]
    fn memorizes_a_tiny_set() {
        let clips: Vec<AmcClip> = (0..10)
            .map(|i| clip(AmcClass::ALL[i % 5], i as u64))
            .collect();
        let cfg = AmcTrainConfig {
            model: small(),
            epochs: 60,
            batch_size: 10,
            lr: 1e-2,
            seed: 3,
        };
        let (model, hist) = train_amc(&clips, &clips, &cfg, |_| {}).unwrap();
        assert!(hist.last().unwrap().loss < hist[0].loss);
        assert!(model.accuracy(&clips).unwrap() >= 0.9);
    }

    #[test]
    fn smoke_training_beats_chance_and_replays() {
        let rc = RenderConfig {
            keep_baseband: true,
            ..RenderConfig::default()
        };
        let recs = generate_records(
            150,
            &SnrSpec::Fixed(20.0),
            &mut ChaCha8Rng::seed_from_u64(8),
            200_000.0,
            &rc,
        )
        .unwrap();
        let clips = make_amc_dataset(
            &recs,
            &AmcDatasetConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert!(clips.len() >= 500, "{} clips", clips.len());
        let clips = &clips[..500];
        let cfg = AmcTrainConfig {
            epochs: 5,
            ..AmcTrainConfig::default()
        };
        let (model, hist) = train_amc(clips, &[], &cfg, |_| {}).unwrap();
        assert!(hist.last().unwrap().train_accuracy > 0.2, "{hist:?}");
        let (_, again) = train_amc(clips, &[], &cfg, |_| {}).unwrap();
        assert_eq!(hist, again);

        let ckpt = model.to_checkpoint();
        let restored = AmcModel::from_checkpoint(&AmcModel::to_checkpoint(&model)).unwrap();
        assert_eq!(restored.to_checkpoint(), ckpt);
        let refs: Vec<&AmcClip> = clips.iter().take(8).collect();
        assert_eq!(
            restored.predict(&refs).unwrap(),
            model.predict(&refs).unwrap()
        );
    }
}
