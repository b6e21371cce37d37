//! Binary checkpoint (`.hat`) holding both fields.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `HATL` |
//! | 4     | format version (`u32`) |
//! | 4+4   | mapping layers, width |
//! | 4+4+8+4+4 | hash levels, base resolution, per-level scale (`f64`), table size, feature dim |
//! | 4+4   | color network hidden layers, width |
//! | 8     | table initialization range (`f64`) |
//! | 8     | parameter count (`u64`) |
//! | 4·n   | parameters as `f32`: mapping layers (weight, bias)…, hash tables (level-major, row-major entries), color layers (weight, bias)… |
//! | 32    | SHA-256 of everything above |

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{AtlasConfig, AtlasField, Fields, MappingConfig, MappingField};
use crate::hashgrid::{HashGridConfig, INIT_RANGE};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HATL";
pub const CHECKPOINT_VERSION: u32 = 2;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Integrity("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn encode_checkpoint(fields: &Fields<f32>) -> Result<Vec<u8>> {
    fields.check_finite()?;
    let m = fields.mapping.config();
    let a = fields.atlas.config();
    let mut out = Vec::with_capacity(128 + fields.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [m.layers, m.width, a.grid.levels, a.grid.base_resolution] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&a.grid.per_level_scale.to_le_bytes());
    for v in [a.grid.table_size, a.grid.feature_dim, a.hidden_layers, a.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&INIT_RANGE.to_le_bytes());
    out.extend_from_slice(&(fields.param_count() as u64).to_le_bytes());
    for (_, _, t) in fields.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Fields<f32>> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic bytes)".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 32 + 8 {
        return Err(Error::Integrity("checkpoint truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { bytes: body, pos: 8 };
    let mapping = MappingConfig {
        layers: r.u32()? as usize,
        width: r.u32()? as usize,
    };
    let grid = HashGridConfig {
        levels: r.u32()? as usize,
        base_resolution: r.u32()? as usize,
        per_level_scale: r.f64()?,
        table_size: r.u32()? as usize,
        feature_dim: r.u32()? as usize,
    };
    let atlas = AtlasConfig {
        grid,
        hidden_layers: r.u32()? as usize,
        width: r.u32()? as usize,
    };
    let _init_range = r.f64()?;
    let count = r.u64()? as usize;
    if mapping.layers < 2 || mapping.width == 0 || atlas.width == 0 {
        return Err(Error::Integrity("checkpoint header describes an empty network".into()));
    }
    let mut fields = Fields {
        mapping: MappingField::zeros(mapping),
        atlas: AtlasField::zeros(atlas).map_err(|e| Error::Integrity(format!("checkpoint header: {e}")))?,
    };
    if fields.param_count() != count || body.len() != r.pos + count * 4 {
        return Err(Error::Integrity(format!(
            "checkpoint truncated or inconsistent: header promises {count} parameters, body has {} bytes",
            body.len().saturating_sub(r.pos)
        )));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checkpoint checksum mismatch".into()));
    }
    for (_, _, t) in fields.tensors_mut() {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
        }
    }
    Ok(fields)
}

pub fn save_checkpoint(fields: &Fields<f32>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(fields)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("hat.tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Fields<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
