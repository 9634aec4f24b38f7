//! Fusion architectures: two unimodal baselines, Score and Concatenation late
//! fusion, and the Paralinguistic / Semantic / Symmetric multi-head
//! cross-attention fusions.

mod attention;
pub mod gradcheck;
mod model;

use serde::{Deserialize, Serialize};

pub use attention::{
    multi_head_attention, scaled_dot_attention, scaled_dot_attention_backward, AttentionGrads,
    AttentionOutput, MhaCache, MhaGrads, MultiHeadAttention,
};
pub use model::{
    concat_fusion_forward, count_params, cross_attention_forward, init_params, model_grad,
    score_fusion_forward, segment_loss, unimodal_forward, FusionModel, SegmentInput,
};

use crate::alignment::AlignmentMethod;
use crate::numkit::{NumError, N_CLASSES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{which} embedding width {got} does not match d_model {expected}")]
    WidthMismatch {
        which: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("aligned sequence lengths differ: {paralinguistic} paralinguistic rows vs {semantic} semantic rows")]
    SequenceMismatch {
        paralinguistic: usize,
        semantic: usize,
    },
    #[error("{op} called on a {arch} model")]
    WrongArchitecture { op: &'static str, arch: Architecture },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("expected {expected} parameter arrays, got {got}")]
    TensorCount { expected: usize, got: usize },
}

pub type FusionResult<T> = Result<T, FusionError>;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    UnimodalPara,
    UnimodalSem,
    Score,
    #[value(alias = "concat")]
    Concatenation,
    #[value(alias = "para")]
    ParaCrossAttn,
    #[value(alias = "sem")]
    SemCrossAttn,
    #[value(alias = "symmetric")]
    SymmetricCrossAttn,
}

impl Architecture {
    pub const ALL: [Architecture; 7] = [
        Architecture::UnimodalPara,
        Architecture::UnimodalSem,
        Architecture::Score,
        Architecture::Concatenation,
        Architecture::ParaCrossAttn,
        Architecture::SemCrossAttn,
        Architecture::SymmetricCrossAttn,
    ];

    pub fn is_cross_attention(self) -> bool {
        matches!(
            self,
            Architecture::ParaCrossAttn | Architecture::SemCrossAttn | Architecture::SymmetricCrossAttn
        )
    }

    /// Number of multi-head attention blocks.
    pub fn n_attention_blocks(self) -> usize {
        match self {
            Architecture::SymmetricCrossAttn => 2,
            Architecture::ParaCrossAttn | Architecture::SemCrossAttn => 1,
            _ => 0,
        }
    }

    /// Input widths of the classifier heads, in units of `d_model`.
    fn head_widths(self) -> &'static [usize] {
        match self {
            Architecture::Score => &[1, 1],
            Architecture::Concatenation => &[2],
            _ => &[1],
        }
    }

    /// Name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::UnimodalPara => "Unimodal paralinguistic",
            Architecture::UnimodalSem => "Unimodal semantic",
            Architecture::Score => "Score",
            Architecture::Concatenation => "Concatenation",
            Architecture::ParaCrossAttn => "Paralinguistic cross-attention",
            Architecture::SemCrossAttn => "Semantic cross-attention",
            Architecture::SymmetricCrossAttn => "Symmetric cross-attention",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::UnimodalPara => "unimodal-para",
            Architecture::UnimodalSem => "unimodal-sem",
            Architecture::Score => "score",
            Architecture::Concatenation => "concatenation",
            Architecture::ParaCrossAttn => "para-cross-attn",
            Architecture::SemCrossAttn => "sem-cross-attn",
            Architecture::SymmetricCrossAttn => "symmetric-cross-attn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    Base,
    Large,
    /// Explicit `d_model` / head count (desk-scale runs, gradient checks).
    Custom,
}

impl ModelSize {
    /// `(d_model, n_heads)` of a preset.
    pub fn dims(self) -> Option<(usize, usize)> {
        match self {
            ModelSize::Base => Some((768, 16)),
            ModelSize::Large => Some((1024, 32)),
            ModelSize::Custom => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelSize::Base => "Base",
            ModelSize::Large => "Large",
            ModelSize::Custom => "Custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub size: ModelSize,
    pub d_model: usize,
    pub n_heads: usize,
    pub alignment: AlignmentMethod,
}

impl ModelConfig {
    pub fn preset(architecture: Architecture, size: ModelSize, alignment: AlignmentMethod) -> FusionResult<Self> {
        let (d_model, n_heads) = size
            .dims()
            .ok_or_else(|| FusionError::InvalidConfig("custom size needs explicit dimensions".into()))?;
        Self::new(architecture, size, d_model, n_heads, alignment)
    }

    pub fn custom(
        architecture: Architecture,
        d_model: usize,
        n_heads: usize,
        alignment: AlignmentMethod,
    ) -> FusionResult<Self> {
        Self::new(architecture, ModelSize::Custom, d_model, n_heads, alignment)
    }

    fn new(
        architecture: Architecture,
        size: ModelSize,
        d_model: usize,
        n_heads: usize,
        alignment: AlignmentMethod,
    ) -> FusionResult<Self> {
        let cfg = Self {
            architecture,
            size,
            d_model,
            n_heads,
            alignment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> FusionResult<()> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(FusionError::InvalidConfig(
                "d_model and n_heads must be positive".into(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(FusionError::InvalidConfig(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if let Some(dims) = self.size.dims() {
            if dims != (self.d_model, self.n_heads) {
                return Err(FusionError::InvalidConfig(format!(
                    "{} size implies d_model={} h={}",
                    self.size.label(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        N_CLASSES
    }

    /// `d_k = d_v = d_model / h`
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Input widths of each classifier head.
    pub fn head_in_dims(&self) -> Vec<usize> {
        self.architecture
            .head_widths()
            .iter()
            .map(|k| k * self.d_model)
            .collect()
    }
}
