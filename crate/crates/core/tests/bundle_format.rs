use std::path::PathBuf;

use crossfuse::dataio::{
    decode_bundle_bytes, encode_bundle, read_bundle, write_bundle, DataError, Emotion, SegmentRecord,
};
use crossfuse::numkit::Matrix;
use proptest::prelude::*;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden.emob")
}

/// Three small segments with exactly representable values.
fn golden_records() -> Vec<SegmentRecord> {
    let mat = |rows: usize, cols: usize, base: f32| {
        let data = (0..rows * cols).map(|i| base + i as f32 * 0.125 - 1.0).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    };
    vec![
        SegmentRecord {
            id: "call01-seg001".into(),
            speaker_id: "spk-A".into(),
            dialogue_id: "call01".into(),
            label: Emotion::Anger,
            char_lengths: vec![3, 1, 7],
            h_p: mat(5, 4, 0.0),
            h_s: mat(3, 4, 10.0),
        },
        SegmentRecord {
            id: "call01-seg002".into(),
            speaker_id: "spk-B".into(),
            dialogue_id: "call01".into(),
            label: Emotion::Neutral,
            char_lengths: vec![2],
            h_p: mat(3, 4, -4.0),
            h_s: mat(1, 4, 0.5),
        },
        SegmentRecord {
            id: "call02-seg001".into(),
            speaker_id: "spk-C".into(),
            dialogue_id: "call02".into(),
            label: Emotion::Positive,
            char_lengths: vec![4, 4],
            h_p: mat(2, 4, 100.0),
            h_s: mat(2, 4, -0.25),
        },
    ]
}

#[test]
fn golden_bundle_is_byte_stable() {
    let bytes = encode_bundle(&golden_records()).unwrap();
    if std::env::var_os("CROSSFUSE_BLESS").is_some() {
        std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
        std::fs::write(golden_path(), &bytes).unwrap();
    }
    let golden = std::fs::read(golden_path()).expect("golden bundle missing; rerun with CROSSFUSE_BLESS=1");
    assert_eq!(bytes, golden);
    assert_eq!(read_bundle(golden_path()).unwrap(), golden_records());
}

/// Decodes the golden file with hand-written byte parsing and an untyped JSON
/// view, independent of the crate's reader.
#[test]
fn golden_bundle_layout_by_hand() {
    let bytes = std::fs::read(golden_path()).unwrap();
    assert_eq!(&bytes[0..4], b"EMOB");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 0);
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + mlen]).unwrap();
    let data_start = (16 + mlen).div_ceil(8) * 8;
    assert!(bytes[16 + mlen..data_start].iter().all(|&b| b == 0));
    assert_eq!(manifest["format"], "EMOB");
    assert_eq!(manifest["d_p"], 4);
    assert_eq!(manifest["n_segments"], 3);

    for (entry, rec) in manifest["segments"].as_array().unwrap().iter().zip(golden_records()) {
        assert_eq!(entry["id"], rec.id.as_str());
        assert_eq!(entry["label"], rec.label.code());
        for (key, m) in [("h_p", &rec.h_p), ("h_s", &rec.h_s)] {
            let off = entry[key]["offset"].as_u64().unwrap() as usize;
            assert_eq!(off % 8, 0);
            assert_eq!(entry[key]["rows"].as_u64().unwrap() as usize, m.rows());
            let start = data_start + off;
            let values: Vec<f32> = bytes[start..start + 4 * m.len()]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            assert_eq!(values, m.data());
        }
    }
}

fn arb_record(id: usize, d_p: usize, d_s: usize) -> impl Strategy<Value = SegmentRecord> {
    (1usize..12, 1usize..6, 0usize..4, any::<u64>()).prop_flat_map(move |(frames, subwords, label, spk)| {
        (
            prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), frames * d_p),
            prop::collection::vec(-1e6f32..1e6, subwords * d_s),
            prop::collection::vec(1usize..30, subwords),
        )
            .prop_map(move |(hp, hs, chars)| SegmentRecord {
                id: format!("seg-{id}"),
                speaker_id: format!("spk-{}", spk % 7),
                dialogue_id: format!("dlg-{}", spk % 3),
                label: Emotion::ALL[label],
                char_lengths: chars,
                h_p: Matrix::from_vec(frames, d_p, hp).unwrap(),
                h_s: Matrix::from_vec(subwords, d_s, hs).unwrap(),
            })
    })
}

fn arb_bundle() -> impl Strategy<Value = Vec<SegmentRecord>> {
    (1usize..6, 1usize..6, 0usize..6).prop_flat_map(|(d_p, d_s, n)| {
        (0..n).map(|i| arb_record(i, d_p, d_s)).collect::<Vec<_>>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_read_is_identity(records in arb_bundle()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.emob");
        write_bundle(&records, &path).unwrap();
        let back = read_bundle(&path).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            // Bit-exact payloads, including signed zeros.
            let bits = |m: &Matrix<f32>| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.h_p), bits(&b.h_p));
            prop_assert_eq!(bits(&a.h_s), bits(&b.h_s));
            prop_assert_eq!(a, b);
        }
        // Re-encoding the decoded records reproduces the file.
        prop_assert_eq!(encode_bundle(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn any_truncation_is_an_error(cut in 0.0f64..1.0) {
        let bytes = std::fs::read(golden_path()).unwrap();
        let keep = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(decode_bundle_bytes(bytes[..keep].to_vec()).is_err());
    }
}

fn golden_bytes() -> Vec<u8> {
    std::fs::read(golden_path()).unwrap()
}

fn manifest_range(bytes: &[u8]) -> std::ops::Range<usize> {
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    16..16 + mlen
}

#[test]
fn corrupted_magic() {
    let mut bytes = golden_bytes();
    bytes[0] = b'X';
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::BadMagic { .. })));
}

#[test]
fn unsupported_version() {
    let mut bytes = golden_bytes();
    bytes[4] = 2;
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::UnsupportedVersion(2))));
}

#[test]
fn truncated_header() {
    let bytes = golden_bytes();
    assert!(matches!(decode_bundle_bytes(bytes[..10].to_vec()), Err(DataError::TruncatedHeader)));
    let mut long_manifest = bytes.clone();
    long_manifest[8..16].copy_from_slice(&(bytes.len() as u64).to_le_bytes());
    assert!(matches!(decode_bundle_bytes(long_manifest), Err(DataError::TruncatedHeader)));
}

#[test]
fn truncated_payload() {
    let bytes = golden_bytes();
    let short = bytes[..bytes.len() - 4].to_vec();
    assert!(matches!(decode_bundle_bytes(short), Err(DataError::TruncatedPayload { .. })));
}

/// Rewrites the manifest JSON, keeping the data section where it was.
fn with_manifest(edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let bytes = golden_bytes();
    let range = manifest_range(&bytes);
    let data_start = range.end.div_ceil(8) * 8;
    let mut m: serde_json::Value = serde_json::from_slice(&bytes[range]).unwrap();
    edit(&mut m);
    let json = serde_json::to_vec(&m).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.resize(out.len().div_ceil(8) * 8, 0);
    out.extend_from_slice(&bytes[data_start..]);
    out
}

#[test]
fn shape_mismatch() {
    let bytes = with_manifest(|m| m["segments"][0]["n_frames"] = 6.into());
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::ShapeMismatch(_))));
    let bytes = with_manifest(|m| m["d_s"] = 5.into());
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::ShapeMismatch(_))));
    let bytes = with_manifest(|m| m["segments"][1]["char_lengths"] = serde_json::json!([1, 2]));
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::ShapeMismatch(_))));
}

#[test]
fn misaligned_offset() {
    let bytes = with_manifest(|m| m["segments"][2]["h_s"]["offset"] = 4.into());
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::MisalignedOffset { .. })));
}

#[test]
fn non_finite_payload() {
    let mut bytes = golden_bytes();
    let data_start = manifest_range(&bytes).end.div_ceil(8) * 8;
    bytes[data_start..data_start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::NonFinitePayload(_))));
}

#[test]
fn duplicate_ids_rejected_both_ways() {
    let mut recs = golden_records();
    recs[1].id = recs[0].id.clone();
    assert!(matches!(encode_bundle(&recs), Err(DataError::DuplicateId(_))));
    let bytes = with_manifest(|m| m["segments"][1]["id"] = "call01-seg001".into());
    assert!(matches!(decode_bundle_bytes(bytes), Err(DataError::DuplicateId(_))));
}

#[test]
fn mixed_widths_rejected() {
    let mut recs = golden_records();
    recs[2].h_p = Matrix::zeros(2, 3);
    assert!(matches!(encode_bundle(&recs), Err(DataError::ShapeMismatch(_))));
}

#[test]
fn failed_write_leaves_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.emob");
    let mut recs = golden_records();
    recs[0].char_lengths.push(1);
    assert!(write_bundle(&recs, &path).is_err());
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
