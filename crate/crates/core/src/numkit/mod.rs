//! Dense matrix kernels and the hand-differentiated primitives every fusion
//! architecture is built from.
//!
//! Everything here is generic over [`Real`], which is implemented for `f32`
//! (training) and `f64` (gradient checking).

mod gradcheck;
mod matrix;
mod ops;
mod optim;

use std::fmt::{Debug, Display};
use std::iter::Sum;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use matrix::Matrix;
pub use ops::{
    cross_entropy, cross_entropy_from_logits, head_backward, head_forward, log_sum_exp,
    mean_over_positions, mean_over_positions_backward, softmax, softmax_backward, softmax_rows,
    HeadGrads, HeadOutput, HeadParams, CE_FLOOR, N_CLASSES,
};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState, ClipStats};

/// Floating-point element type of a [`Matrix`].
pub trait Real:
    num_traits::Float + Default + Debug + Display + Send + Sync + Sum + 'static
{
    /// Short name used in reports (`"f32"` / `"f64"`).
    const NAME: &'static str;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("label {0} out of range (expected 0..{N_CLASSES})")]
    LabelOutOfRange(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type NumResult<T> = Result<T, NumError>;
