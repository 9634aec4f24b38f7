//! Segment records, the EMOB bundle file format, speaker-disjoint fold plans
//! and the synthetic bimodal generator.

mod bundle;
pub mod container;
mod folds;
mod synth;

use serde::{Deserialize, Serialize};

pub use bundle::{decode_bundle_bytes, encode_bundle, read_bundle, write_bundle, BundleManifest, PayloadRef, SegmentEntry, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use folds::{make_folds, Fold, FoldPlan, Split};
pub use synth::{synth_generate, SynthSpec};

use crate::numkit::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated payload: {what} needs bytes {start}..{end} but the data section has {available}")]
    TruncatedPayload {
        what: String,
        start: u64,
        end: u64,
        available: u64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in payload of {0}")]
    NonFinitePayload(String),
    #[error("misaligned payload offset {offset} for {what}")]
    MisalignedOffset { what: String, offset: u64 },
    #[error("duplicate segment id {0:?}")]
    DuplicateId(String),
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("need at least {needed} distinct speakers, found {found}")]
    TooFewSpeakers { needed: usize, found: usize },
    #[error("invalid fold plan: {0}")]
    InvalidPlan(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type DataResult<T> = Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Emotion {
    #[serde(rename = "ANG")]
    Anger,
    #[serde(rename = "FEA")]
    Fear,
    #[serde(rename = "NEU")]
    Neutral,
    #[serde(rename = "POS")]
    Positive,
}

impl Emotion {
    /// Column order of every report: ANG, FEA, NEU, POS.
    pub const ALL: [Emotion; 4] = [Emotion::Anger, Emotion::Fear, Emotion::Neutral, Emotion::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Emotion::Anger => "ANG",
            Emotion::Fear => "FEA",
            Emotion::Neutral => "NEU",
            Emotion::Positive => "POS",
        }
    }
}

/// One utterance: both embedding matrices plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub id: String,
    pub speaker_id: String,
    pub dialogue_id: String,
    pub label: Emotion,
    /// Character count of each subword (one entry per row of `h_s`).
    pub char_lengths: Vec<usize>,
    /// `n_frames x d_p`
    pub h_p: Matrix<f32>,
    /// `n_subwords x d_s`
    pub h_s: Matrix<f32>,
}

impl SegmentRecord {
    pub fn n_frames(&self) -> usize {
        self.h_p.rows()
    }

    pub fn n_subwords(&self) -> usize {
        self.h_s.rows()
    }

    pub fn validate(&self) -> DataResult<()> {
        let fail = |reason: String| {
            Err(DataError::InvalidRecord {
                id: self.id.clone(),
                reason,
            })
        };
        if self.n_frames() == 0 {
            return fail("no frames".into());
        }
        if self.n_subwords() == 0 {
            return fail("no subwords".into());
        }
        if self.char_lengths.len() != self.n_subwords() {
            return fail(format!(
                "{} character lengths for {} subwords",
                self.char_lengths.len(),
                self.n_subwords()
            ));
        }
        if self.char_lengths.contains(&0) {
            return fail("zero character length".into());
        }
        if !self.h_p.is_finite() || !self.h_s.is_finite() {
            return Err(DataError::NonFinitePayload(self.id.clone()));
        }
        Ok(())
    }
}
