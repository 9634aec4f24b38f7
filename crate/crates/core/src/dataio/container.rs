//! Framing shared by bundle (`EMOB`) and model (`EMOM`) files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic
//! 4       2     format version (u16 LE)
//! 6       2     reserved, zero
//! 8       8     manifest length in bytes (u64 LE)
//! 16      n     UTF-8 JSON manifest
//! ...           zero padding to the next multiple of 8 (data section start)
//! ...           f32 LE row-major payloads, each at an 8-byte aligned offset
//!               relative to the data section start, zero padded
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, DataResult};

pub const HEADER_LEN: usize = 16;
pub const ALIGN: u64 = 8;

pub fn align_up(n: u64) -> u64 {
    n.div_ceil(ALIGN) * ALIGN
}

/// Offsets (relative to the data section) for payloads of `lens` f32
/// elements each, plus the total data section length.
pub fn layout(lens: impl IntoIterator<Item = usize>) -> (Vec<u64>, u64) {
    let mut offsets = Vec::new();
    let mut cursor = 0u64;
    for len in lens {
        offsets.push(cursor);
        cursor = align_up(cursor + 4 * len as u64);
    }
    (offsets, cursor)
}

/// Serializes a complete file image.
pub fn encode(magic: [u8; 4], version: u16, manifest: &[u8], payloads: &[(u64, &[f32])]) -> Vec<u8> {
    let data_start = align_up((HEADER_LEN + manifest.len()) as u64) as usize;
    let data_len = payloads
        .iter()
        .map(|(off, p)| align_up(off + 4 * p.len() as u64))
        .max()
        .unwrap_or(0) as usize;
    let mut out = Vec::with_capacity(data_start + data_len);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(manifest);
    out.resize(data_start + data_len, 0);
    for (off, payload) in payloads {
        let mut pos = data_start + *off as usize;
        for v in *payload {
            out[pos..pos + 4].copy_from_slice(&v.to_le_bytes());
            pos += 4;
        }
    }
    out
}

/// Writes `bytes` to `path` via a temporary file in the same directory and a
/// rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> DataResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| DataError::Io(e.error))?;
    Ok(())
}

/// A parsed file image: the manifest bytes and the data section.
#[derive(Debug)]
pub struct Container {
    pub version: u16,
    pub manifest: Vec<u8>,
    pub data: Vec<u8>,
}

impl Container {
    pub fn read(path: &Path, magic: [u8; 4], supported_version: u16) -> DataResult<Self> {
        Self::parse(fs::read(path)?, magic, supported_version)
    }

    pub fn parse(bytes: Vec<u8>, magic: [u8; 4], supported_version: u16) -> DataResult<Self> {
        if bytes.len() < 4 {
            return Err(DataError::TruncatedHeader);
        }
        let found: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if found != magic {
            return Err(DataError::BadMagic {
                expected: magic,
                found,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::TruncatedHeader);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != supported_version {
            return Err(DataError::UnsupportedVersion(version));
        }
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let manifest_end = (HEADER_LEN as u64)
            .checked_add(manifest_len)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or(DataError::TruncatedHeader)? as usize;
        let manifest = bytes[HEADER_LEN..manifest_end].to_vec();
        let data_start = (align_up(manifest_end as u64) as usize).min(bytes.len());
        let data = bytes[data_start..].to_vec();
        Ok(Self {
            version,
            manifest,
            data,
        })
    }

    /// Reads `len` f32 values at `offset` of the data section.
    pub fn payload(&self, what: &str, offset: u64, len: usize) -> DataResult<Vec<f32>> {
        if !offset.is_multiple_of(ALIGN) {
            return Err(DataError::MisalignedOffset {
                what: what.to_string(),
                offset,
            });
        }
        let end = offset.saturating_add(4 * len as u64);
        if end > self.data.len() as u64 {
            return Err(DataError::TruncatedPayload {
                what: what.to_string(),
                start: offset,
                end,
                available: self.data.len() as u64,
            });
        }
        let bytes = &self.data[offset as usize..end as usize];
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinitePayload(what.to_string()));
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_aligned() {
        let (offs, total) = layout([3, 2, 0, 5]);
        assert_eq!(offs, vec![0, 16, 24, 24]);
        assert_eq!(total, 48);
    }

    #[test]
    fn encode_then_parse() {
        let a = [1.0f32, 2.0, 3.0];
        let b = [-0.5f32];
        let (offs, _) = layout([a.len(), b.len()]);
        let img = encode(*b"TEST", 1, b"{\"x\":1}", &[(offs[0], &a), (offs[1], &b)]);
        assert_eq!(img.len() % 8, 0);
        let c = Container::parse(img, *b"TEST", 1).unwrap();
        assert_eq!(c.manifest, b"{\"x\":1}");
        assert_eq!(c.payload("a", offs[0], 3).unwrap(), a);
        assert_eq!(c.payload("b", offs[1], 1).unwrap(), b);
        assert!(matches!(c.payload("b", 4, 1), Err(DataError::MisalignedOffset { .. })));
        assert!(matches!(c.payload("b", offs[1], 9), Err(DataError::TruncatedPayload { .. })));
    }
}
