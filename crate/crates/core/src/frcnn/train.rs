use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Alternation, TrainConfig};
use super::model::{propose_regions, FrcnnModel, RpnOutput, CLASS_REG_SCALE};
use crate::geom::{assign_rpn_targets, encode_regression, iou, AnchorLabel, Interval};
use crate::nn::{
    bce_with_logits, roi_cells, smooth_l1, softmax_cross_entropy, Adam, AdamConfig,
    FlushSubnormals, Layer, Mode, Parameterized, Shape, Tensor, ROI_OUT_LEN,
};
use crate::synth::DatasetRecord;
use crate::{Error, Result};

/// IoU at which a sampled region counts as foreground for the classifier.
pub const ROI_FOREGROUND_IOU: f64 = 0.5;

/// Mean losses over one epoch. A step that did not run in the epoch
/// reports NaN for its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub cls: f64,
    pub reg: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Running {
    n: usize,
    a: f64,
    b: f64,
}

impl Running {
    fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.a += a;
        self.b += b;
    }

    fn means(&self) -> (f64, f64) {
        if self.n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (self.a / self.n as f64, self.b / self.n as f64)
        }
    }
}

/// Alternating trainer: one Adam state drives the backbone and proposal
/// head, another the backbone and classifier head.
pub struct Trainer {
    model: FrcnnModel,
    config: TrainConfig,
    rpn_opt: Adam<f32>,
    cls_opt: Adam<f32>,
    rng: ChaCha8Rng,
    history: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(mut model: FrcnnModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let rpn_opt = {
            let mut p = model.backbone.params_mut();
            p.extend(model.rpn.params_mut());
            Adam::new(adam, &p)
        };
        let cls_opt = {
            let mut p = model.backbone.params_mut();
            p.extend(model.classifier.params_mut());
            Adam::new(adam, &p)
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            config,
            rpn_opt,
            cls_opt,
            rng,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &FrcnnModel {
        &self.model
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn into_parts(self) -> (FrcnnModel, Vec<LossRecord>) {
        (self.model, self.history)
    }

    fn labelled_truths(&self, rec: &DatasetRecord) -> Vec<(Interval, usize)> {
        rec.truths
            .iter()
            .map(|t| (t.interval, self.model.class_of(t)))
            .collect()
    }

    /// Runs one epoch and appends its mean losses to the history.
    pub fn train_epoch(&mut self, data: &[DatasetRecord]) -> Result<LossRecord> {
        if data.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        for rec in data {
            self.model.check_input(&rec.spectrum)?;
        }
        let _flush = FlushSubnormals::enable();
        let epoch = self.history.len();
        let (do_rpn, do_cls) = match self.config.alternation {
            Alternation::PerSample => (true, true),
            Alternation::PerEpoch => (epoch.is_multiple_of(2), epoch % 2 == 1),
        };
        let mut order = Vec::with_capacity(self.config.epoch_length);
        while order.len() < self.config.epoch_length {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut self.rng);
            order.extend(idx);
        }
        order.truncate(self.config.epoch_length);

        let (mut rpn_loss, mut cls_loss) = (Running::default(), Running::default());
        for (k, &i) in order.iter().enumerate() {
            let rec = &data[i];
            if do_rpn {
                let (a, b) = self.rpn_step(rec)?;
                check_loss(epoch, k, "proposal", a + b)?;
                rpn_loss.push(a, b);
            }
            if do_cls {
                if let Some((a, b)) = self.classifier_step(rec)? {
                    check_loss(epoch, k, "classifier", a + b)?;
                    cls_loss.push(a, b);
                }
            }
        }
        let (rpn_cls, rpn_reg) = rpn_loss.means();
        let (cls, reg) = cls_loss.means();
        let record = LossRecord {
            epoch,
            rpn_cls,
            rpn_reg,
            cls,
            reg,
        };
        self.history.push(record);
        Ok(record)
    }

    /// Trains for the configured number of epochs, reporting each one.
    pub fn run(
        &mut self,
        data: &[DatasetRecord],
        mut on_epoch: impl FnMut(&LossRecord),
    ) -> Result<()> {
        while self.history.len() < self.config.epochs {
            let r = self.train_epoch(data)?;
            on_epoch(&r);
        }
        Ok(())
    }

    /// Proposal-head step on sampled anchors. Returns (objectness, regression) losses.
    fn rpn_step(&mut self, rec: &DatasetRecord) -> Result<(f64, f64)> {
        let cfg = &self.config;
        let model = &mut self.model;
        let truths: Vec<Interval> = rec.intervals();
        let targets = assign_rpn_targets(
            model.grid(),
            &truths,
            cfg.rpn_overlap_min,
            cfg.rpn_overlap_max,
        );
        let (pos, neg) = sample_anchors(
            &targets.labels,
            cfg.anchor_batch,
            cfg.anchor_positive_fraction,
            &mut self.rng,
        );

        let x = super::model::standardize(&rec.spectrum);
        let features = model.backbone.forward(&x, Mode::Train)?;
        let h = model.rpn.relu.forward(
            &model.rpn.conv.forward(&features, Mode::Train)?,
            Mode::Train,
        )?;
        let logits = model.rpn.cls.forward(&h, Mode::Train)?;
        let offsets = model.rpn.reg.forward(&h, Mode::Train)?;
        if !logits.is_finite() || !offsets.is_finite() {
            return Err(Error::Divergence(
                "proposal head produced non-finite outputs".into(),
            ));
        }

        let sampled: Vec<usize> = pos.iter().chain(&neg).copied().collect();
        let z: Vec<f32> = sampled.iter().map(|&i| logits.data()[i]).collect();
        let t: Vec<f32> = sampled
            .iter()
            .map(|&i| {
                if targets.labels[i] == AnchorLabel::Positive {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let (cls_loss, dz) = if sampled.is_empty() {
            (0.0, Vec::new())
        } else {
            bce_with_logits(&z, &t)
        };
        let mut dlogits = Tensor::zeros(logits.shape());
        for (&i, g) in sampled.iter().zip(dz) {
            dlogits.data_mut()[i] = g;
        }

        let mut doffsets = Tensor::zeros(offsets.shape());
        let mut reg_loss = 0.0f64;
        let norm = pos.len().max(1) as f32;
        for &i in &pos {
            let target = targets.regressions[i].expect("positive anchors carry targets");
            let pred = &offsets.data()[2 * i..2 * i + 2];
            let (l, g) = smooth_l1(pred, &[target[0] as f32, target[1] as f32]);
            reg_loss += l as f64 / norm as f64;
            doffsets.data_mut()[2 * i] = g[0] / norm;
            doffsets.data_mut()[2 * i + 1] = g[1] / norm;
        }

        let mut dh = model.rpn.cls.backward(&dlogits)?;
        dh.add_assign(&model.rpn.reg.backward(&doffsets)?)?;
        let dh = model.rpn.relu.backward(&dh)?;
        let dfeat = model.rpn.conv.backward(&dh)?;
        model.backbone.backward(&dfeat)?;

        let mut params = model.backbone.params_mut();
        params.extend(model.rpn.params_mut());
        self.rpn_opt.step(&mut params)?;
        Ok((cls_loss as f64, reg_loss))
    }

    /// Classifier step on sampled proposals plus ground truth. Returns
    /// `None` when no region could be sampled.
    fn classifier_step(&mut self, rec: &DatasetRecord) -> Result<Option<(f64, f64)>> {
        let truths = self.labelled_truths(rec);
        let cfg = &self.config;
        let model = &mut self.model;
        let x = super::model::standardize(&rec.spectrum);
        let features = model.backbone.forward(&x, Mode::Train)?;
        let rpn: RpnOutput = model.rpn_forward(&features)?;
        let proposals = propose_regions(&rpn, model.grid(), cfg.train_proposals, 0.7)?;

        let n_cells = features.shape().len;
        let stride = model.config().features.stride;
        let mut fg = Vec::new();
        let mut bg = Vec::new();
        let candidates = proposals
            .iter()
            .map(|d| d.interval)
            .chain(truths.iter().map(|t| t.0));
        for region in candidates {
            if roi_cells(&region, stride, n_cells).is_err() {
                continue;
            }
            let best = truths.iter().map(|(t, c)| (iou(&region, t), *t, *c)).fold(
                None::<(f64, Interval, usize)>,
                |acc, cur| match acc {
                    Some(a) if a.0 >= cur.0 => Some(a),
                    _ => Some(cur),
                },
            );
            match best {
                Some((o, t, c)) if o >= ROI_FOREGROUND_IOU => {
                    let off = encode_regression(&region, &t)?;
                    fg.push((
                        region,
                        c + 1,
                        [off[0] * CLASS_REG_SCALE[0], off[1] * CLASS_REG_SCALE[1]],
                    ));
                }
                _ => bg.push(region),
            }
        }
        fg.shuffle(&mut self.rng);
        bg.shuffle(&mut self.rng);
        let max_fg = (cfg.roi_batch as f64 * cfg.roi_foreground_fraction).floor() as usize;
        fg.truncate(max_fg);
        bg.truncate(cfg.roi_batch - fg.len());
        if fg.is_empty() && bg.is_empty() {
            return Ok(None);
        }

        let regions: Vec<Interval> = fg.iter().map(|f| f.0).chain(bg.iter().copied()).collect();
        let labels: Vec<usize> = fg.iter().map(|f| f.1).chain(bg.iter().map(|_| 0)).collect();
        let r = regions.len();
        let head = &mut model.classifier;
        let pooled = head.roi.forward(&features, &regions)?;
        let c_feat = pooled.shape().channels;
        let flat = pooled.reshape(Shape::new(r, 1, ROI_OUT_LEN * c_feat))?;
        let h = head.fc.forward(&flat, Mode::Train)?;
        let logits = head.cls.forward(&h, Mode::Train)?;
        let offsets = head.reg.forward(&h, Mode::Train)?;
        if !logits.is_finite() || !offsets.is_finite() {
            return Err(Error::Divergence(
                "classifier produced non-finite outputs".into(),
            ));
        }
        let classes = head.cls.outputs();
        let (cls_loss, _, dlogits) = softmax_cross_entropy(logits.data(), classes, &labels);

        let width = head.reg.outputs();
        let mut doffsets = Tensor::zeros(offsets.shape());
        let mut reg_loss = 0.0f64;
        let norm = fg.len().max(1) as f32;
        for (row, (_, label, target)) in fg.iter().enumerate() {
            let k = row * width + 2 * (label - 1);
            let (l, g) = smooth_l1(
                &offsets.data()[k..k + 2],
                &[target[0] as f32, target[1] as f32],
            );
            reg_loss += l as f64 / norm as f64;
            doffsets.data_mut()[k] = g[0] / norm;
            doffsets.data_mut()[k + 1] = g[1] / norm;
        }

        let mut dh = head
            .cls
            .backward(&Tensor::from_vec(logits.shape(), dlogits)?)?;
        dh.add_assign(&head.reg.backward(&doffsets)?)?;
        let dflat = head.fc.backward(&dh)?;
        let dpooled = dflat.reshape(Shape::new(r, ROI_OUT_LEN, c_feat))?;
        let dfeat = head.roi.backward(&dpooled)?;
        model.backbone.backward(&dfeat)?;

        let mut params = model.backbone.params_mut();
        params.extend(model.classifier.params_mut());
        self.cls_opt.step(&mut params)?;
        Ok(Some((cls_loss as f64, reg_loss)))
    }
}

fn indices_of(labels: &[AnchorLabel], which: AnchorLabel) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == which)
        .map(|(i, _)| i)
        .collect()
}

/// Draws an anchor mini-batch: at most `batch * positive_fraction`
/// positives, then negatives up to `batch` in total. Ignored anchors are
/// never sampled.
pub fn sample_anchors<R: Rng + ?Sized>(
    labels: &[AnchorLabel],
    batch: usize,
    positive_fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut pos = indices_of(labels, AnchorLabel::Positive);
    let mut neg = indices_of(labels, AnchorLabel::Negative);
    pos.shuffle(rng);
    neg.shuffle(rng);
    pos.truncate((batch as f64 * positive_fraction).floor() as usize);
    neg.truncate(batch - pos.len());
    (pos, neg)
}

fn check_loss(epoch: usize, sample: usize, step: &str, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "{step} loss became {loss} at epoch {epoch}, sample {sample}"
        )))
    }
}

/// Trains `model` on `data` and returns it with the per-epoch loss history.
pub fn train_alternating(
    model: FrcnnModel,
    data: &[DatasetRecord],
    config: &TrainConfig,
) -> Result<(FrcnnModel, Vec<LossRecord>)> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(data, |_| {})?;
    Ok(trainer.into_parts())
}
