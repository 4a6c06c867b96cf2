//! A small 1D neural-network kernel with hand-written backward passes.
//!
//! Tensors are `(batch, length, channels)` with channels fastest. Layers
//! cache their inputs on `forward` and accumulate parameter gradients on
//! `backward`; `infer` is the cache-free evaluation path and only needs
//! `&self`, so a trained model can serve several threads.

mod adam;
mod batchnorm;
mod checkpoint;
mod conv;
mod layer;
mod linear;
mod loss;
mod param;
mod pool;
mod real;
mod roi;
mod skip;
mod subnormal;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use checkpoint::Checkpoint;
pub use conv::Conv1d;
pub use layer::{sigmoid, softmax_rows, Layer, Mode, Relu, Sequential};
pub use linear::Linear;
pub use loss::{
    bce_with_logits, binary_crossentropy, categorical_crossentropy, smooth_l1,
    softmax_cross_entropy, LOG_EPS,
};
pub use param::{he_limit, Param, Parameterized};
pub use pool::MaxPool2;
pub use real::Real;
pub use roi::{roi_cells, roi_pool_1d, RoiPool, ROI_OUT_LEN};
pub use skip::SkipConcat;
pub use subnormal::FlushSubnormals;
pub use tensor::{Shape, Tensor};
