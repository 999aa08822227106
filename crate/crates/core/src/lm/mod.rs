//! Decoder-only transformer with hand-written backpropagation.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod real;
pub mod train;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_forced, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, TrainConfig};
pub use model::{Batch, Model};
pub use real::Real;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds the context window of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at step {step}: loss {loss:.4} stayed above 3x the initial {initial:.4}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("no training data: {0}")]
    NoData(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint vocabulary hash {found} does not match {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint integrity: {0}")]
    Integrity(String),
}
