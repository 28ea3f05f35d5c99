//! Complex-valued residual CNN: layers, backbone, training, cost
//! accounting, and model serialization.

mod adam;
mod conv;
mod flops;
mod head;
mod io;
mod model;
mod norm;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, ParamTensor};
pub use conv::CconvLayer;
pub use flops::{count_flops, count_flops_prefix, FlopsReport};
pub use head::{global_avg_pool, softmax_ce, softmax_rows, FcLayer};
pub use io::{model_from_bytes, model_to_bytes};
pub use model::{input_from_spectrograms, BasicBlock, CvnnModel, ModelConfig, NUM_TAPS};
pub use norm::{crelu_backward, crelu_forward, CbnLayer, Sym2};
pub use tensor::ComplexTensor;
pub use train::{predict_labels, train_backbone, EpochMetrics, TrainConfig, TrainOutcome};

use thiserror::Error;

/// Errors raised by model construction, training, and serialization.
#[derive(Debug, Error)]
pub enum CvnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activations in layer {layer}")]
    NonFinite { layer: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("model file has bad magic bytes")]
    BadMagic,
    #[error("model file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("model file checksum mismatch (corrupt or truncated)")]
    ChecksumMismatch,
    #[error("model file truncated: {0}")]
    Truncated(&'static str),
    #[error("class count mismatch in layer {layer}: file has {found}, expected {expected}")]
    ClassCount { layer: String, found: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
