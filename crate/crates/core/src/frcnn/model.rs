use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{block_filters, Family, FeatureExtractorConfig, ModelConfig};
use crate::dsp::SpectrumFrame;
use crate::geom::{
    decode_clipped, generate_anchors, nms, threshold_detections, AnchorGrid, Detection, Interval,
};
use crate::nn::{
    sigmoid, softmax_rows, BatchNorm, Checkpoint, Conv1d, Layer, Linear, MaxPool2, Param,
    Parameterized, Relu, RoiPool, Sequential, Shape, SkipConcat, Tensor, ROI_OUT_LEN,
};
use crate::synth::Truth;
use crate::{Error, Result};

/// Checkpoint kind tag for detector weights.
pub const CHECKPOINT_KIND: &str = "frcnn";

/// Divisors applied to classifier regression offsets, so that targets of
/// typical refinements have roughly unit scale.
pub const CLASS_REG_SCALE: [f64; 2] = [8.0, 4.0];

/// Narrowest proposal kept, in input bins.
pub const MIN_PROPOSAL_BINS: f64 = 2.0;

/// Inference-time settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    /// Proposals passed to the classifier.
    pub proposals: usize,
    /// Overlap used to thin proposals.
    pub rpn_nms_overlap: f64,
    /// Overlap used to thin final detections.
    pub nms_overlap: f64,
    /// Minimum class score of a reported detection.
    pub p_min: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            proposals: 64,
            rpn_nms_overlap: 0.7,
            nms_overlap: 0.5,
            p_min: 0.9,
        }
    }
}

/// Zero-mean, unit-variance copy of a dB spectrum as a `(1, n, 1)` tensor.
pub fn standardize(spectrum: &SpectrumFrame) -> Tensor<f32> {
    let bins = spectrum.bins();
    let n = bins.len() as f64;
    let mean = bins.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = bins.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    let data = bins
        .iter()
        .map(|&v| ((v as f64 - mean) * inv) as f32)
        .collect();
    Tensor::from_vec(Shape::new(1, bins.len(), 1), data).expect("shape matches data")
}

fn vgg_body<R: Rng + ?Sized>(
    name: &str,
    cin: usize,
    filters: usize,
    rng: &mut R,
) -> Result<Sequential<f32>> {
    let mut body = Sequential::new();
    let mut c = cin;
    for j in 1..=3 {
        body.push(Conv1d::new(&format!("{name}.conv{j}"), c, filters, 3, rng)?);
        body.push(Relu::new());
        c = filters;
    }
    Ok(body)
}

/// Builds the feature extractor; returns it with its output channel count.
pub(crate) fn build_backbone<R: Rng + ?Sized>(
    cfg: &FeatureExtractorConfig,
    rng: &mut R,
) -> Result<(Sequential<f32>, usize)> {
    let pooled = cfg.pooled_blocks();
    let mut net = Sequential::new();
    let mut cin = 1;
    for i in 1..=pooled + 1 {
        let last = i == pooled + 1;
        let filters = block_filters(i.min(pooled));
        let name = format!("block{i}");
        match cfg.family {
            Family::Vgg => {
                let body = vgg_body(&name, cin, filters, rng)?;
                net.push(body);
                if !last {
                    net.push(MaxPool2::new());
                }
                cin = filters;
            }
            Family::VggSkip => {
                let body = vgg_body(&name, cin, filters, rng)?;
                net.push(SkipConcat::new(&name, body, cin + filters, !last));
                cin += filters;
            }
            Family::Signal => {
                net.push(Conv1d::new(&format!("{name}.conv"), cin, filters, 7, rng)?);
                net.push(Relu::new());
                net.push(BatchNorm::new(&format!("{name}.bn"), filters));
                if !last {
                    net.push(MaxPool2::new());
                }
                cin = filters;
            }
        }
    }
    Ok((net, cin))
}

/// Raw proposal-head outputs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnOutput {
    /// Objectness logit per anchor, indexed like the anchor grid.
    pub logits: Vec<f32>,
    /// `(t_c, t_w)` per anchor, interleaved.
    pub offsets: Vec<f32>,
}

impl RpnOutput {
    pub fn score(&self, i: usize) -> f64 {
        sigmoid(self.logits[i] as f64)
    }
}

pub(crate) struct RpnHead {
    pub(crate) conv: Conv1d<f32>,
    pub(crate) relu: Relu,
    pub(crate) cls: Conv1d<f32>,
    pub(crate) reg: Conv1d<f32>,
}

impl RpnHead {
    fn new<R: Rng + ?Sized>(
        channels: usize,
        depth: usize,
        anchors_per_cell: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let small = 0.01 * 3f64.sqrt();
        Ok(Self {
            conv: Conv1d::new("rpn.conv", channels, depth, 3, rng)?,
            relu: Relu::new(),
            cls: Conv1d::with_limit("rpn.cls", depth, anchors_per_cell, 1, small, rng)?,
            reg: Conv1d::with_limit("rpn.reg", depth, 2 * anchors_per_cell, 1, small, rng)?,
        })
    }

    fn infer(&self, features: &Tensor<f32>) -> Result<RpnOutput> {
        let h = Layer::infer(&self.relu, &self.conv.infer(features)?)?;
        Ok(RpnOutput {
            logits: self.cls.infer(&h)?.into_data(),
            offsets: self.reg.infer(&h)?.into_data(),
        })
    }
}

impl Parameterized<f32> for RpnHead {
    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.conv.params_mut();
        v.extend(self.cls.params_mut());
        v.extend(self.reg.params_mut());
        v
    }

    fn state(&self) -> Vec<&Param<f32>> {
        let mut v = self.conv.state();
        v.extend(self.cls.state());
        v.extend(self.reg.state());
        v
    }

    fn state_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.conv.state_mut();
        v.extend(self.cls.state_mut());
        v.extend(self.reg.state_mut());
        v
    }
}

pub(crate) struct ClassifierHead {
    pub(crate) roi: RoiPool,
    pub(crate) fc: Sequential<f32>,
    pub(crate) cls: Linear<f32>,
    pub(crate) reg: Linear<f32>,
}

impl ClassifierHead {
    fn new<R: Rng + ?Sized>(cfg: &ModelConfig, channels: usize, rng: &mut R) -> Result<Self> {
        let w = cfg.fc_width();
        let mut fc = Sequential::new();
        fc.push(Linear::new("cls.fc1", ROI_OUT_LEN * channels, w, rng)?);
        fc.push(Relu::new());
        fc.push(Linear::new("cls.fc2", w, w, rng)?);
        fc.push(Relu::new());
        let c = cfg.num_classes;
        Ok(Self {
            roi: RoiPool::new(cfg.features.stride, ROI_OUT_LEN),
            fc,
            cls: Linear::with_limit("cls.score", w, c + 1, 0.01 * 3f64.sqrt(), rng)?,
            reg: Linear::with_limit("cls.reg", w, 2 * c, 0.001 * 3f64.sqrt(), rng)?,
        })
    }

    /// Class probabilities `(R, C+1)` and offsets `(R, 2C)` for each region.
    fn infer(&self, features: &Tensor<f32>, regions: &[Interval]) -> Result<(Vec<f32>, Vec<f32>)> {
        let pooled = self.roi.infer(features, regions)?;
        let c = pooled.shape().channels;
        let flat = pooled.reshape(Shape::new(regions.len(), 1, ROI_OUT_LEN * c))?;
        let h = self.fc.infer(&flat)?;
        let logits = self.cls.infer(&h)?.into_data();
        let probs = softmax_rows(&logits, self.cls.outputs());
        Ok((probs, self.reg.infer(&h)?.into_data()))
    }
}

impl Parameterized<f32> for ClassifierHead {
    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.fc.params_mut();
        v.extend(self.cls.params_mut());
        v.extend(self.reg.params_mut());
        v
    }

    fn state(&self) -> Vec<&Param<f32>> {
        let mut v = self.fc.state();
        v.extend(self.cls.state());
        v.extend(self.reg.state());
        v
    }

    fn state_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.fc.state_mut();
        v.extend(self.cls.state_mut());
        v.extend(self.reg.state_mut());
        v
    }
}

/// Classifier output for a batch of proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedRegions {
    /// One candidate per proposal and foreground class.
    pub detections: Vec<Detection>,
    /// Proposals dropped because they or their refinement were degenerate.
    pub skipped: usize,
}

/// Scores every anchor, refines it by its predicted offsets, and keeps the
/// `top_n` best after suppression at `overlap`.
pub fn propose_regions(
    rpn: &RpnOutput,
    grid: &AnchorGrid,
    top_n: usize,
    overlap: f64,
) -> Result<Vec<Detection>> {
    if rpn.logits.len() != grid.len() || rpn.offsets.len() != 2 * grid.len() {
        return Err(Error::Input(format!(
            "proposal head produced {} scores for {} anchors",
            rpn.logits.len(),
            grid.len()
        )));
    }
    let size = grid.input_size() as f64;
    let candidates: Vec<Detection> = grid
        .anchors()
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            let t = [rpn.offsets[2 * i] as f64, rpn.offsets[2 * i + 1] as f64];
            decode_clipped(a, t, size)
                .filter(|iv| iv.len() >= MIN_PROPOSAL_BINS)
                .map(|iv| Detection::new(iv, 0, rpn.score(i)))
        })
        .collect();
    let mut kept = nms(&candidates, overlap);
    kept.truncate(top_n);
    Ok(kept)
}

/// Faster R-CNN detector over 1D spectra.
pub struct FrcnnModel {
    config: ModelConfig,
    grid: AnchorGrid,
    pub(crate) backbone: Sequential<f32>,
    pub(crate) rpn: RpnHead,
    pub(crate) classifier: ClassifierHead,
}

impl FrcnnModel {
    /// Freshly initialized weights, reproducible from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let grid = generate_anchors(config.fft_size, config.features.stride, &config.scales)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (backbone, channels) = build_backbone(&config.features, &mut rng)?;
        let rpn = RpnHead::new(channels, config.rpn_depth(), config.scales.len(), &mut rng)?;
        let classifier = ClassifierHead::new(&config, channels, &mut rng)?;
        Ok(Self {
            config,
            grid,
            backbone,
            rpn,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn num_params(&self) -> usize {
        self.state().iter().map(|p| p.len()).sum()
    }

    /// Foreground class (0-based) the detector should report for a truth.
    pub fn class_of(&self, truth: &Truth) -> usize {
        if self.config.num_classes == 1 {
            0
        } else {
            truth.scheme.index().min(self.config.num_classes - 1)
        }
    }

    pub(crate) fn check_input(&self, spectrum: &SpectrumFrame) -> Result<()> {
        if spectrum.fft_size() != self.config.fft_size {
            return Err(Error::Input(format!(
                "model expects {}-bin frames, got {}",
                self.config.fft_size,
                spectrum.fft_size()
            )));
        }
        Ok(())
    }

    /// Backbone feature map `(1, n / stride, C)`.
    pub fn extract_features(&self, spectrum: &SpectrumFrame) -> Result<Tensor<f32>> {
        self.check_input(spectrum)?;
        self.backbone.infer(&standardize(spectrum))
    }

    pub fn rpn_forward(&self, features: &Tensor<f32>) -> Result<RpnOutput> {
        self.rpn.infer(features)
    }

    /// Scores proposals and refines them per class. Class ids are 0-based
    /// foreground classes; the score is that class's softmax probability.
    pub fn classify_regions(
        &self,
        features: &Tensor<f32>,
        proposals: &[Interval],
    ) -> Result<ClassifiedRegions> {
        let n_cells = features.shape().len;
        let stride = self.config.features.stride;
        let usable: Vec<Interval> = proposals
            .iter()
            .copied()
            .filter(|p| crate::nn::roi_cells(p, stride, n_cells).is_ok())
            .collect();
        let mut skipped = proposals.len() - usable.len();
        if usable.is_empty() {
            return Ok(ClassifiedRegions {
                detections: Vec::new(),
                skipped,
            });
        }
        let (probs, offsets) = self.classifier.infer(features, &usable)?;
        let c = self.config.num_classes;
        let size = self.config.fft_size as f64;
        let mut detections = Vec::with_capacity(usable.len() * c);
        for (r, region) in usable.iter().enumerate() {
            let mut any = false;
            for k in 0..c {
                let t = [
                    offsets[r * 2 * c + 2 * k] as f64 / CLASS_REG_SCALE[0],
                    offsets[r * 2 * c + 2 * k + 1] as f64 / CLASS_REG_SCALE[1],
                ];
                if let Some(iv) = decode_clipped(region, t, size).filter(|iv| iv.len() > 0.0) {
                    detections.push(Detection::new(iv, k, probs[r * (c + 1) + k + 1] as f64));
                    any = true;
                }
            }
            if !any {
                skipped += 1;
            }
        }
        Ok(ClassifiedRegions {
            detections,
            skipped,
        })
    }

    /// Every classified proposal after suppression, before thresholding.
    pub fn detect_all(
        &self,
        spectrum: &SpectrumFrame,
        cfg: &DetectConfig,
    ) -> Result<Vec<Detection>> {
        let features = self.extract_features(spectrum)?;
        let rpn = self.rpn_forward(&features)?;
        let proposals = propose_regions(&rpn, &self.grid, cfg.proposals, cfg.rpn_nms_overlap)?;
        let regions: Vec<Interval> = proposals.iter().map(|d| d.interval).collect();
        let classified = self.classify_regions(&features, &regions)?;
        Ok(nms(&classified.detections, cfg.nms_overlap))
    }

    /// Final detections scoring at least `cfg.p_min`.
    pub fn detect(&self, spectrum: &SpectrumFrame, cfg: &DetectConfig) -> Result<Vec<Detection>> {
        Ok(threshold_detections(
            &self.detect_all(spectrum, cfg)?,
            cfg.p_min,
        ))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(CHECKPOINT_KIND, &self.config.to_string(), &self.state())
    }

    /// Rebuilds a model from a checkpoint; the architecture comes from the
    /// stored config string.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!(
                "expected a {CHECKPOINT_KIND} checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        let config: ModelConfig = ckpt.config.parse()?;
        let mut model = Self::new(config, 0)?;
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

impl Parameterized<f32> for FrcnnModel {
    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.backbone.params_mut();
        v.extend(self.rpn.params_mut());
        v.extend(self.classifier.params_mut());
        v
    }

    fn state(&self) -> Vec<&Param<f32>> {
        let mut v = self.backbone.state();
        v.extend(self.rpn.state());
        v.extend(self.classifier.state());
        v
    }

    fn state_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut v = self.backbone.state_mut();
        v.extend(self.rpn.state_mut());
        v.extend(self.classifier.state_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frcnn::Family;
    use crate::synth::{generate_records, RenderConfig, SnrSpec};

    fn backbone_out(family: Family, stride: usize, len: usize) -> Shape {
        let cfg = FeatureExtractorConfig {
            family,
            stride,
            downscaled: false,
        };
        let (net, channels) = build_backbone(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = Tensor::from_vec(
            Shape::new(1, len, 1),
            (0..len).map(|i| (i % 7) as f32).collect(),
        )
        .unwrap();
        let y = net.infer(&x).unwrap();
        assert_eq!(y.shape().channels, channels);
        y.shape()
    }

    #[test]
    fn vgg_feature_shapes_follow_the_filter_table() {
        assert_eq!(backbone_out(Family::Vgg, 16, 1024), Shape::new(1, 64, 512));
        assert_eq!(backbone_out(Family::Vgg, 2, 1024), Shape::new(1, 512, 64));
        assert_eq!(
            backbone_out(Family::Signal, 16, 1024),
            Shape::new(1, 64, 512)
        );
        assert_eq!(backbone_out(Family::Vgg, 32, 1024).len, 32);
    }

    #[test]
    fn skip_family_concatenates_block_inputs() {
        let s = backbone_out(Family::VggSkip, 4, 256);
        assert_eq!(s, Shape::new(1, 64, 1 + 64 + 128 + 128));
    }

    #[test]
    fn features_scale_with_input_length() {
        assert_eq!(
            backbone_out(Family::Vgg, 8, 2048).len,
            2 * backbone_out(Family::Vgg, 8, 1024).len
        );
    }

    fn downscaled() -> FrcnnModel {
        let cfg = ModelConfig {
            features: FeatureExtractorConfig {
                downscaled: true,
                ..FeatureExtractorConfig::default()
            },
            ..ModelConfig::default()
        };
        FrcnnModel::new(cfg, 7).unwrap()
    }

    fn frame(seed: u64) -> SpectrumFrame {
        generate_records(
            1,
            &SnrSpec::Fixed(20.0),
            &mut ChaCha8Rng::seed_from_u64(seed),
            crate::SAMPLE_RATE_HZ,
            &RenderConfig::default(),
        )
        .unwrap()
        .remove(0)
        .spectrum
    }

    #[test]
    fn rpn_output_matches_anchor_count() {
        let m = downscaled();
        let f = m.extract_features(&frame(1)).unwrap();
        assert_eq!(f.shape(), Shape::new(1, 64, 512));
        let r = m.rpn_forward(&f).unwrap();
        assert_eq!(r.logits.len(), 64 * 5);
        assert_eq!(r.offsets.len(), 64 * 10);
        assert_eq!(r.logits.len(), m.grid().len());
        assert!((0..r.logits.len()).all(|i| (0.0..=1.0).contains(&r.score(i))));
    }

    #[test]
    fn zero_objectness_weights_give_half_scores() {
        let mut m = downscaled();
        for p in m.rpn.cls.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let r = m
            .rpn_forward(&m.extract_features(&frame(2)).unwrap())
            .unwrap();
        assert!((0..r.logits.len()).all(|i| r.score(i) == 0.5));
    }

    #[test]
    fn dominant_anchor_ranks_first() {
        let grid = generate_anchors(1024, 16, &[32, 64]).unwrap();
        let mut rpn = RpnOutput {
            logits: vec![-2.0; grid.len()],
            offsets: vec![0.0; 2 * grid.len()],
        };
        rpn.logits[41] = 5.0;
        let props = propose_regions(&rpn, &grid, 10, 0.7).unwrap();
        assert_eq!(props.len(), 10);
        assert_eq!(props[0].interval, grid.anchors()[41].clip(1024.0).unwrap());
        assert!(props.windows(2).all(|w| w[0].score >= w[1].score));
        let short = RpnOutput {
            logits: vec![0.0; 3],
            offsets: vec![0.0; 6],
        };
        assert!(matches!(
            propose_regions(&short, &grid, 10, 0.7),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_regression_keeps_proposals() {
        let mut m = downscaled();
        for p in m.classifier.reg.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let f = m.extract_features(&frame(3)).unwrap();
        let props = [
            Interval::new(100.0, 180.0).unwrap(),
            Interval::new(600.0, 1024.0).unwrap(),
        ];
        let out = m.classify_regions(&f, &props).unwrap();
        assert_eq!(out.skipped, 0);
        let got: Vec<Interval> = out.detections.iter().map(|d| d.interval).collect();
        assert_eq!(got, props.to_vec());
        // An untrained classifier is close to uniform over {background, signal}.
        assert!(out.detections.iter().all(|d| (d.score - 0.5).abs() < 0.2));
    }

    #[test]
    fn proposals_off_the_feature_map_are_skipped() {
        let m = downscaled();
        let f = m.extract_features(&frame(3)).unwrap();
        let out = m
            .classify_regions(&f, &[Interval::new(1100.0, 1200.0).unwrap()])
            .unwrap();
        assert_eq!((out.detections.len(), out.skipped), (0, 1));
    }

    #[test]
    fn detections_are_bounded_sorted_and_thresholded() {
        let m = downscaled();
        let spec = frame(4);
        let mut prev = usize::MAX;
        for p_min in [0.0, 0.3, 0.5, 0.7, 0.9] {
            let cfg = DetectConfig {
                p_min,
                ..DetectConfig::default()
            };
            let dets = m.detect(&spec, &cfg).unwrap();
            assert!(dets.len() <= prev);
            prev = dets.len();
            assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
            for d in &dets {
                assert!(d.score >= p_min);
                assert!(d.interval.start() >= 0.0 && d.interval.end() <= 1024.0);
            }
        }
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let m = downscaled();
        let short = SpectrumFrame::new(vec![0.0; 512]).unwrap();
        assert!(matches!(m.extract_features(&short), Err(Error::Input(_))));
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let m = downscaled();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = FrcnnModel::load(&path).unwrap();
        assert_eq!(back.config(), m.config());
        let spec = frame(5);
        let cfg = DetectConfig {
            p_min: 0.0,
            ..DetectConfig::default()
        };
        assert_eq!(
            back.detect(&spec, &cfg).unwrap(),
            m.detect(&spec, &cfg).unwrap()
        );
        let mut ckpt = m.to_checkpoint();
        ckpt.kind = "amc".into();
        assert!(matches!(
            FrcnnModel::from_checkpoint(&ckpt),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn standardized_input_is_zero_mean_unit_variance() {
        let t = standardize(&frame(6));
        let n = t.data().len() as f64;
        let mean = t.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = t
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4);
        let flat = standardize(&SpectrumFrame::new(vec![3.0; 16]).unwrap());
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }
}
