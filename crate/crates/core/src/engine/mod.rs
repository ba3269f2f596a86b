//! Numeric substrate: dense tensors, reverse-mode differentiation, Adam and
//! parameter clipping.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{clip_params, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport, ParamCheck};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} entries, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch { expected: usize, shape: Vec<usize> },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("invalid concat axis {0}")]
    InvalidAxis(usize),
    #[error("row slice {start}..{} out of range for {rows} rows", start + len)]
    SliceOutOfRange { start: usize, len: usize, rows: usize },
    #[error("probability {value} at index {index} outside (0, 1)")]
    ProbabilityDomain { index: usize, value: f64 },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("optimizer tracks {expected} parameters, parameter set has {found}")]
    OptimizerMismatch { expected: usize, found: usize },
    #[error("gradient shape does not match parameter `{param}`")]
    GradShape { param: String },
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("clip range must be positive, got {0}")]
    InvalidClip(f64),
}
