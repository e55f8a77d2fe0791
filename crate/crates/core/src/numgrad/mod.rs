//! Dense `f64` tensors, a reverse-mode tape, the layers the policy needs, Adam,
//! a finite-difference checker and the checkpoint manifest.

mod check;
mod checkpoint;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use check::{central_difference, max_relative_error, random_network_check, relative_error, GradCheck, RELATIVE_FLOOR};
pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{CellActivation, GatedCell, Linear};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::{argmax, softmax_logits, Tensor2D};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid use: {0}")]
    Usage(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
