//! Binary model checkpoint.
//!
//! ```text
//! magic    "MLMC"
//! version  u32 = 1
//! config   cell u32 (0 = elman, 1 = lstm), hidden_size u32, num_layers u32,
//!          input_dim u32, num_classes u32
//! tensors  (name_len u16, name, rank u8, dims u32 * rank, f32 LE row-major values)*
//! ```
//!
//! The tensor list, names and shapes are fixed by the config; the reader checks
//! each one and rejects trailing bytes.

use std::path::Path;

use super::ByteReader;
use crate::error::Result;
use crate::model::{CellKind, ModelConfig, ModelParams};

pub const MAGIC: &[u8; 4] = b"MLMC";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let cfg = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cell: u32 = match cfg.cell {
        CellKind::Elman => 0,
        CellKind::Lstm => 1,
    };
    for v in [
        cell,
        cfg.hidden_size as u32,
        cfg.num_layers as u32,
        cfg.input_dim as u32,
        cfg.num_classes as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (spec, values) in params.tensor_specs().iter().zip(params.tensors()) {
        out.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.push(spec.dims.len() as u8);
        for &d in &spec.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(r.error_at(0, "bad magic, expected \"MLMC\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.error_at(4, format!("unsupported version {version}")));
    }
    let cell = match r.u32("cell")? {
        0 => CellKind::Elman,
        1 => CellKind::Lstm,
        other => return Err(r.error_at(8, format!("unknown cell kind {other}"))),
    };
    let mut dims = [0usize; 4];
    for (d, what) in dims
        .iter_mut()
        .zip(["hidden_size", "num_layers", "input_dim", "num_classes"])
    {
        *d = r.u32(what)? as usize;
    }
    // Guard against absurd allocations from corrupted headers.
    if dims.iter().any(|&d| d > 1 << 16) {
        return Err(r.error_at(12, "model dimensions out of range"));
    }
    let config = ModelConfig {
        cell,
        hidden_size: dims[0],
        num_layers: dims[1],
        input_dim: dims[2],
        num_classes: dims[3],
    };
    let mut params = ModelParams::zeros(config).map_err(|e| r.error_at(12, e.to_string()))?;
    let specs = params.tensor_specs();
    for (spec, dst) in specs.iter().zip(params.tensors_mut()) {
        let at = r.offset();
        let name_len = r.u16("tensor name length")? as usize;
        let name = r.string(name_len, "tensor name")?;
        if name != spec.name {
            return Err(r.error_at(
                at,
                format!("expected tensor `{}`, found `{name}`", spec.name),
            ));
        }
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dim")? as usize);
        }
        if shape != spec.dims {
            return Err(r.error_at(
                at,
                format!(
                    "tensor `{name}` has shape {shape:?}, expected {:?}",
                    spec.dims
                ),
            ));
        }
        let raw = r.take(dst.len() * 4, "tensor values")?;
        for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(r.error_at(at, format!("tensor `{name}` has a non-finite value")));
            }
            *d = v as f64;
        }
    }
    if r.remaining() != 0 {
        return Err(r.error_at(r.offset(), format!("{} trailing byte(s)", r.remaining())));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(cell: CellKind) -> ModelParams {
        let mut p = ModelParams::init(
            ModelConfig {
                cell,
                hidden_size: 3,
                num_layers: 2,
                input_dim: 4,
                num_classes: 2,
            },
            11,
        )
        .unwrap();
        p.round_to_f32();
        p
    }

    #[test]
    fn round_trip_is_exact_at_f32_precision() {
        for cell in [CellKind::Elman, CellKind::Lstm] {
            let p = params(cell);
            let bytes = encode_checkpoint(&p);
            assert_eq!(&bytes[..4], b"MLMC");
            assert_eq!(decode_checkpoint(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&params(CellKind::Lstm));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(decode_checkpoint(&bad).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_checkpoint(&long),
            Err(crate::Error::Format { .. })
        ));
    }
}
