//! EMOB bundles: a JSON manifest describing every segment followed by its two
//! embedding matrices as raw f32 payloads. See `docs/emob-format.md`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{self, Container};
use super::{DataError, DataResult, Emotion, SegmentRecord};
use crate::numkit::Matrix;

pub const BUNDLE_MAGIC: [u8; 4] = *b"EMOB";
pub const BUNDLE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadRef {
    /// Byte offset relative to the data section.
    pub offset: u64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: String,
    pub speaker_id: String,
    pub dialogue_id: String,
    pub label: Emotion,
    pub n_frames: usize,
    pub n_subwords: usize,
    pub char_lengths: Vec<usize>,
    pub h_p: PayloadRef,
    pub h_s: PayloadRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u16,
    pub d_p: usize,
    pub d_s: usize,
    pub n_segments: usize,
    pub segments: Vec<SegmentEntry>,
}

fn common_width(records: &[SegmentRecord], which: &str, f: impl Fn(&SegmentRecord) -> usize) -> DataResult<usize> {
    let width = records.first().map_or(0, &f);
    if let Some(r) = records.iter().find(|r| f(r) != width) {
        return Err(DataError::ShapeMismatch(format!(
            "segment {:?} has {which} width {} but the bundle uses {width}",
            r.id,
            f(r)
        )));
    }
    Ok(width)
}

/// Encodes `records` as an EMOB file image. Identical input always yields
/// identical bytes.
pub fn encode_bundle(records: &[SegmentRecord]) -> DataResult<Vec<u8>> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(DataError::DuplicateId(r.id.clone()));
        }
    }
    let d_p = common_width(records, "paralinguistic", |r| r.h_p.cols())?;
    let d_s = common_width(records, "semantic", |r| r.h_s.cols())?;

    let (offsets, _) = container::layout(records.iter().flat_map(|r| [r.h_p.len(), r.h_s.len()]));
    let segments = records
        .iter()
        .enumerate()
        .map(|(i, r)| SegmentEntry {
            id: r.id.clone(),
            speaker_id: r.speaker_id.clone(),
            dialogue_id: r.dialogue_id.clone(),
            label: r.label,
            n_frames: r.n_frames(),
            n_subwords: r.n_subwords(),
            char_lengths: r.char_lengths.clone(),
            h_p: PayloadRef {
                offset: offsets[2 * i],
                rows: r.h_p.rows(),
                cols: r.h_p.cols(),
            },
            h_s: PayloadRef {
                offset: offsets[2 * i + 1],
                rows: r.h_s.rows(),
                cols: r.h_s.cols(),
            },
        })
        .collect();
    let manifest = BundleManifest {
        format: "EMOB".into(),
        version: BUNDLE_VERSION,
        d_p,
        d_s,
        n_segments: records.len(),
        segments,
    };
    let json = serde_json::to_vec(&manifest)?;
    let payloads: Vec<(u64, &[f32])> = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| [(offsets[2 * i], r.h_p.data()), (offsets[2 * i + 1], r.h_s.data())])
        .collect();
    Ok(container::encode(BUNDLE_MAGIC, BUNDLE_VERSION, &json, &payloads))
}

/// Writes `records` to `path` atomically.
pub fn write_bundle(records: &[SegmentRecord], path: impl AsRef<Path>) -> DataResult<()> {
    let bytes = encode_bundle(records)?;
    container::write_atomic(path.as_ref(), &bytes)
}

pub fn read_bundle(path: impl AsRef<Path>) -> DataResult<Vec<SegmentRecord>> {
    let c = Container::read(path.as_ref(), BUNDLE_MAGIC, BUNDLE_VERSION)?;
    decode_bundle(&c)
}

/// Parses and validates an in-memory EMOB image.
pub fn decode_bundle_bytes(bytes: Vec<u8>) -> DataResult<Vec<SegmentRecord>> {
    let c = Container::parse(bytes, BUNDLE_MAGIC, BUNDLE_VERSION)?;
    decode_bundle(&c)
}

fn decode_bundle(c: &Container) -> DataResult<Vec<SegmentRecord>> {
    let manifest: BundleManifest = serde_json::from_slice(&c.manifest)?;
    if manifest.version != c.version {
        return Err(DataError::ShapeMismatch(format!(
            "manifest version {} disagrees with header version {}",
            manifest.version, c.version
        )));
    }
    if manifest.n_segments != manifest.segments.len() {
        return Err(DataError::ShapeMismatch(format!(
            "n_segments {} but {} segment entries",
            manifest.n_segments,
            manifest.segments.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(manifest.segments.len());
    for e in manifest.segments {
        if !seen.insert(e.id.clone()) {
            return Err(DataError::DuplicateId(e.id));
        }
        let shape_err = |msg: String| Err(DataError::ShapeMismatch(format!("segment {:?}: {msg}", e.id)));
        if (e.h_p.rows, e.h_p.cols) != (e.n_frames, manifest.d_p) {
            return shape_err(format!(
                "h_p payload is {}x{} but n_frames x d_p is {}x{}",
                e.h_p.rows, e.h_p.cols, e.n_frames, manifest.d_p
            ));
        }
        if (e.h_s.rows, e.h_s.cols) != (e.n_subwords, manifest.d_s) {
            return shape_err(format!(
                "h_s payload is {}x{} but n_subwords x d_s is {}x{}",
                e.h_s.rows, e.h_s.cols, e.n_subwords, manifest.d_s
            ));
        }
        if e.char_lengths.len() != e.n_subwords {
            return shape_err(format!(
                "{} character lengths for {} subwords",
                e.char_lengths.len(),
                e.n_subwords
            ));
        }
        let h_p = c.payload(&format!("{}/h_p", e.id), e.h_p.offset, e.h_p.rows * e.h_p.cols)?;
        let h_s = c.payload(&format!("{}/h_s", e.id), e.h_s.offset, e.h_s.rows * e.h_s.cols)?;
        let record = SegmentRecord {
            h_p: Matrix::from_vec(e.h_p.rows, e.h_p.cols, h_p)
                .map_err(|err| DataError::ShapeMismatch(err.to_string()))?,
            h_s: Matrix::from_vec(e.h_s.rows, e.h_s.cols, h_s)
                .map_err(|err| DataError::ShapeMismatch(err.to_string()))?,
            id: e.id,
            speaker_id: e.speaker_id,
            dialogue_id: e.dialogue_id,
            label: e.label,
            char_lengths: e.char_lengths,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}
