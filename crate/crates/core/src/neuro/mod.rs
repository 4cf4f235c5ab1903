//! Dense `f64` matrices with reverse-mode differentiation, recurrent cells,
//! Adam and JSON checkpoints.

mod cells;
mod checkpoint;
mod optim;
mod params;
mod tape;
mod tensor;

pub use cells::{gru_cell, lstm_cell, lstm_step, GruParams, Linear, LstmParams};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NeuroError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{len} values do not fill shape {shape:?}")]
    BadData { shape: (usize, usize), len: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
