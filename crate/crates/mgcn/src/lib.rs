//! Multiscale graph convolution on wavelet operators.
//!
//! An MGCONV layer maps per-vertex features `X` (N x C) to
//! `Norm(ELU(sum_s A_s X W_s))`, where each `A_s` is the transpose of an
//! L1-column-normalized wavelet matrix. A Chebyshev layer has the same shape
//! with `A_s = T_s(L~)`, polynomials of the rescaled graph Laplacian; it is
//! kept as a baseline.

mod arch;
mod checkpoint;
mod data;
pub mod gradcheck;
pub mod layers;
pub mod loss;
mod model;
mod operators;
mod optim;
mod train;

pub use arch::{Architecture, LayerSpec};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use data::{network_input, PreparedShape};
pub use model::{Layer, Model, ModelCache};
pub use operators::{chebyshev_operators, layer_scales, normalize_wavelet_columns, rescaled_graph_laplacian, OperatorKind, OperatorSet};
pub use optim::{Adam, AdamParams};
pub use train::{classification_accuracy, train, LossHistory, PhaseConfig, TrainConfig, TrainReport, TrainSample};

use thiserror::Error;

/// Feature width expected by the default architecture.
pub const INPUT_DIM: usize = 128;
/// The reference network.
pub const DEFAULT_ARCHITECTURE: &str = "5x MGCONV96(16) + MGCONV128(16) + FC256";

#[derive(Debug, Error)]
pub enum MgcnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    #[error("wavelet column {0} is identically zero")]
    ZeroColumn(usize),
    #[error("operator {index} of kind {kind} is not available for this shape")]
    MissingOperator { kind: OperatorKind, index: usize },
    #[error("invalid architecture '{text}': {msg}")]
    Architecture { text: String, msg: String },
    #[error("label {label} at vertex {vertex} is out of range for {classes} classes")]
    InvalidLabel { vertex: usize, label: usize, classes: usize },
    #[error("need at least {needed} descriptor pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("model has no classification head")]
    NoHead,
    #[error("the similarity phase needs at least 2 shapes, got {0}")]
    TooFewShapes(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape {0} has no labels")]
    MissingLabels(usize),
    #[error("training diverged: non-finite loss at phase {phase}, epoch {epoch}")]
    NonFinite { phase: usize, epoch: usize },
    #[error(transparent)]
    Wavelet(#[from] weds_core::wavelet::WaveletError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
