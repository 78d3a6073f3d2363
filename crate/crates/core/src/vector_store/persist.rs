//! Index file layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes   "SCOUTIDX"
//! version        u32       FORMAT_VERSION
//! header_len     u32
//! header         JSON      {"format_version","provider_id","mode","dimension","count"}
//! count records:
//!   id_len       u32
//!   id           UTF-8
//!   values       dimension × f64 (IEEE-754 bit pattern)
//! checksum       32 bytes  SHA-256 of everything above
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IndexError, VectorIndex};
use crate::embedding::CompositionMode;

pub const MAGIC: &[u8; 8] = b"SCOUTIDX";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    provider_id: String,
    mode: CompositionMode,
    dimension: usize,
    count: usize,
}

/// File name for the index of a provider and mode, e.g. `hash-d64-s42.dv.idx`.
pub fn index_file_name(provider_id: &str, mode: CompositionMode) -> String {
    let safe: String = provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.{}.idx", mode.slug())
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            format_version: FORMAT_VERSION,
            provider_id: self.provider_id.clone(),
            mode: self.mode,
            dimension: self.dimension,
            count: self.records.len(),
        })
        .expect("header serializes");

        let mut buf = Vec::with_capacity(
            16 + header.len() + self.records.len() * (8 + self.dimension * 8) + CHECKSUM_LEN,
        );
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for record in &self.records {
            buf.extend_from_slice(&(record.dataset_id.len() as u32).to_le_bytes());
            buf.extend_from_slice(record.dataset_id.as_bytes());
            for v in &record.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < MAGIC.len() + 8 + CHECKSUM_LEN {
            return Err(IndexError::Corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(IndexError::Corrupt("not an index file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(IndexError::Corrupt("checksum mismatch (truncated or modified)".into()));
        }

        let mut cursor = Cursor { buf: body, pos: 12 };
        let header_len = cursor.u32()? as usize;
        let header: Header = serde_json::from_slice(cursor.take(header_len)?)
            .map_err(|e| IndexError::Corrupt(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion {
                found: header.format_version,
                supported: FORMAT_VERSION,
            });
        }

        let mut index = VectorIndex::new(header.provider_id, header.mode, header.dimension);
        for i in 0..header.count {
            let id_len = cursor.u32()? as usize;
            let id = std::str::from_utf8(cursor.take(id_len)?)
                .map_err(|_| IndexError::Corrupt(format!("record {i}: id is not UTF-8")))?
                .to_string();
            let raw = cursor.take(header.dimension * 8)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            index
                .insert_raw(id, values)
                .map_err(|e| IndexError::Corrupt(format!("record {i}: {e}")))?;
        }
        if cursor.pos != body.len() {
            return Err(IndexError::Corrupt(format!(
                "{} trailing bytes after {} records",
                body.len() - cursor.pos,
                header.count
            )));
        }
        Ok(index)
    }

    /// Writes atomically: a sibling temp file is renamed over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let tmp = path.with_extension("idx.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use proptest::prelude::*;

    fn sample() -> VectorIndex {
        let mut index = VectorIndex::new("hash-d3-s1", CompositionMode::DV, 3);
        for (id, v) in [("a", [0.1, -0.2, 1e-300]), ("β", [f64::MIN_POSITIVE, 0.0, -0.0])] {
            index
                .insert(id, EmbeddingVector::new(v.to_vec(), "hash-d3-s1", CompositionMode::DV).unwrap())
                .unwrap();
        }
        index
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let index = sample();
        let back = VectorIndex::from_bytes(&index.to_bytes()).unwrap();
        assert_eq!(back, index);
        for (a, b) in index.records().iter().zip(back.records()) {
            let bits = |r: &super::super::IndexRecord| r.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 20, 3] {
            assert!(matches!(
                VectorIndex::from_bytes(&bytes[..cut]),
                Err(IndexError::Corrupt(_))
            ));
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() - 40;
        bytes[mid] ^= 0x01;
        assert!(matches!(VectorIndex::from_bytes(&bytes), Err(IndexError::Corrupt(_))));
    }

    #[test]
    fn other_version_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            VectorIndex::from_bytes(&bytes),
            Err(IndexError::UnsupportedVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn file_names_are_safe() {
        assert_eq!(index_file_name("hash-d64-s42", CompositionMode::DV), "hash-d64-s42.dv.idx");
        assert_eq!(
            index_file_name("text-embedding-3-small/v1", CompositionMode::D),
            "text-embedding-3-small_v1.d.idx"
        );
    }

    proptest! {
        #[test]
        fn any_index_round_trips(
            rows in proptest::collection::vec(proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL, 4), 0..20)
        ) {
            let mut index = VectorIndex::new("p", CompositionMode::V, 4);
            for (i, row) in rows.into_iter().enumerate() {
                index.insert_raw(format!("id-{i}"), row).unwrap();
            }
            let back = VectorIndex::from_bytes(&index.to_bytes()).unwrap();
            prop_assert_eq!(back.records().len(), index.records().len());
            for (a, b) in index.records().iter().zip(back.records()) {
                prop_assert_eq!(&a.dataset_id, &b.dataset_id);
                let ab: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
