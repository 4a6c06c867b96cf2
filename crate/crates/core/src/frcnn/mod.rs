//! One-dimensional Faster R-CNN: a convolutional feature extractor, an
//! anchor-based region proposal head, and a region classifier with
//! per-class interval refinement.

mod config;
mod model;
mod train;

pub use config::{
    block_filters, filters_for_stride, Alternation, Family, FeatureExtractorConfig, ModelConfig,
    TrainConfig,
};
pub use model::{
    propose_regions, standardize, ClassifiedRegions, DetectConfig, FrcnnModel, RpnOutput,
    CHECKPOINT_KIND, CLASS_REG_SCALE, MIN_PROPOSAL_BINS,
};
pub use train::{sample_anchors, train_alternating, LossRecord, Trainer, ROI_FOREGROUND_IOU};
