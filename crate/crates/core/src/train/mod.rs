//! Mini-batch training with best-validation-UA checkpoint selection,
//! evaluation metrics and cross-fold pooling.

mod checkpoint;
mod metrics;
pub mod report;
mod trainer;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use metrics::{combine_folds, evaluate, Metrics, Prediction};
pub use trainer::{
    cross_validate, prepare_segments, train_fold, CrossValOutcome, EpochRecord, FoldOutcome, PreparedSegment,
};

use crate::dataio::{DataError, Split};
use crate::fusion::FusionError;
use crate::numkit::NumError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite loss at fold {fold}, epoch {epoch}, step {step}")]
    NonFiniteLoss { fold: usize, epoch: usize, step: usize },
    #[error("fold {fold}: {split:?} split is empty")]
    EmptySplit { fold: usize, split: Split },
    #[error("no segments to evaluate")]
    EmptySegments,
    #[error("fold index {index} out of range for a {k}-fold plan")]
    InvalidFold { index: usize, k: usize },
    #[error("segment {0:?} is listed in the plan but missing from the bundle")]
    UnknownSegment(String),
    #[error("segment {0:?} appears in more than one fold")]
    OverlappingSegments(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
}

impl From<NumError> for TrainError {
    fn from(e: NumError) -> Self {
        TrainError::Fusion(e.into())
    }
}

pub type TrainResult<T> = Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 8,
            max_epochs: 50,
            clip_norm: 1.0,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl Hyper {
    /// Settings for desk-scale synthetic runs, which converge in seconds.
    pub fn desk(seed: u64) -> Self {
        Self {
            lr: 1e-3,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> TrainResult<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::InvalidHyper(format!("lr {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidHyper("batch_size must be positive".into()));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(TrainError::InvalidHyper(format!(
                "clip_norm {} must be positive",
                self.clip_norm
            )));
        }
        Ok(())
    }
}
