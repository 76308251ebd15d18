//! MLSE v1: a self-describing little-endian container for token-embedding datasets.
//!
//! ```text
//! magic      "MLSE"
//! version    u32 = 1
//! m          u32            embedding width
//! w          u32            class count
//! w times:   name_len u16, UTF-8 name
//! n          u64            instance count
//! n times:   id_len u16, UTF-8 id
//!            has_labels u8 (0 or 1)
//!            if 1: w bytes, each 0 or 1
//!            d_i u32        token count
//!            d_i * m f32    token-major
//! ```
//!
//! The reader is strict: unknown versions, truncation and trailing bytes are errors.

use std::path::Path;

use ndarray::Array2;

use super::ByteReader;
use crate::error::{Error, Result};
use crate::types::{EmbeddedDataset, EmbeddedInstance, LabelVector};

pub const MAGIC: &[u8; 4] = b"MLSE";
pub const VERSION: u32 = 1;

fn len_u16(s: &str, what: &str) -> Result<u16> {
    u16::try_from(s.len())
        .map_err(|_| Error::InvalidArgument(format!("{what} `{s}` is longer than 65535 bytes")))
}

pub fn encode_embeddings(dataset: &EmbeddedDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.embedding_dim as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.num_classes() as u32).to_le_bytes());
    for name in &dataset.class_names {
        out.extend_from_slice(&len_u16(name, "class name")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for inst in &dataset.instances {
        out.extend_from_slice(&len_u16(&inst.id, "instance id")?.to_le_bytes());
        out.extend_from_slice(inst.id.as_bytes());
        match &inst.labels {
            Some(labels) => {
                out.push(1);
                out.extend(labels.bits().iter().map(|&b| b as u8));
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(inst.seq_len() as u32).to_le_bytes());
        for v in inst.tokens().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddedDataset> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"MLSE\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.error_at(4, format!("unsupported version {version}")));
    }
    let m = r.u32("embedding width")? as usize;
    if m == 0 {
        return Err(r.error_at(8, "embedding width is zero"));
    }
    let w = r.u32("class count")? as usize;
    if w == 0 {
        return Err(r.error_at(12, "class count is zero"));
    }
    let mut class_names = Vec::with_capacity(w.min(1024));
    for _ in 0..w {
        let len = r.u16("class name length")? as usize;
        class_names.push(r.string(len, "class name")?);
    }
    let n = r.u64("instance count")?;
    let mut instances = Vec::new();
    for _ in 0..n {
        let id_offset = r.offset();
        let len = r.u16("id length")? as usize;
        let id = r.string(len, "instance id")?;
        let flag_offset = r.offset();
        let labels = match r.u8("has_labels")? {
            0 => None,
            1 => {
                let start = r.offset();
                let bits = r.take(w, "labels")?;
                Some(LabelVector::from_u8(bits).map_err(|e| r.error_at(start, e.to_string()))?)
            }
            other => {
                return Err(r.error_at(
                    flag_offset,
                    format!("has_labels must be 0 or 1, got {other}"),
                ))
            }
        };
        let d_offset = r.offset();
        let d = r.u32("token count")? as usize;
        if d == 0 {
            return Err(r.error_at(d_offset, "token count is zero"));
        }
        let count = d
            .checked_mul(m)
            .filter(|c| c.checked_mul(4).is_some())
            .ok_or_else(|| r.error_at(d_offset, "token matrix size overflows"))?;
        let raw = r.take(count * 4, "token values")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tokens = Array2::from_shape_vec((d, m), values).expect("length checked");
        instances.push(
            EmbeddedInstance::new(id, tokens, labels)
                .map_err(|e| r.error_at(id_offset, e.to_string()))?,
        );
    }
    if r.remaining() != 0 {
        return Err(r.error_at(r.offset(), format!("{} trailing byte(s)", r.remaining())));
    }
    EmbeddedDataset::new(class_names, m, instances).map_err(|e| Error::Format {
        offset: 0,
        msg: e.to_string(),
    })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddedDataset> {
    decode_embeddings(&std::fs::read(path)?)
}

pub fn write_embeddings(dataset: &EmbeddedDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_embeddings(dataset)?)?;
    Ok(())
}
