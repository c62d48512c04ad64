//! A self-contained Vision Transformer engine.
//!
//! Tensors with hand-written vector-Jacobian products, a ViT forward and
//! backward pass, image preprocessing, Adam training with early stopping,
//! classification metrics and a binary checkpoint container.

pub mod checkpoint;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{ViTConfig, ViTParams, VisionTransformer};
pub use tensor::{Real, Tape, Tensor, Var};
pub use train::{EpochLog, TrainConfig};
