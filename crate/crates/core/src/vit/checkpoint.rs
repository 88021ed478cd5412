//! Versioned little-endian binary checkpoint:
//!
//! ```text
//! magic "TTVITCKP" | u32 version | 9 x u64 config | u32 tensor count
//! per tensor: u32 name length | name | u64 value count | f64 values
//! ```

use std::path::Path;

use super::params::{ViTConfig, ViTParams};
use super::TinyViT;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 8] = b"TTVITCKP";
const VERSION: u32 = 1;

pub fn encode(model: &TinyViT) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(64 + model.params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.image_size, c.patch_size, c.embed_dim, c.depth, c.num_heads, c.mlp_ratio,
        c.num_classes, c.in_channels,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    let named = model.params.named();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, values) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<TinyViT, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let mut dims = [0usize; 8];
    for d in &mut dims {
        *d = r.u64()? as usize;
    }
    let config = ViTConfig {
        image_size: dims[0],
        patch_size: dims[1],
        embed_dim: dims[2],
        depth: dims[3],
        num_heads: dims[4],
        mlp_ratio: dims[5],
        num_classes: dims[6],
        in_channels: dims[7],
        seed: r.u64()?,
    };
    config.validate().map_err(|e| e.to_string())?;
    let mut params = ViTParams::zeros(&config);
    let expected: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(format!("expected {} tensors, found {count}", expected.len()));
    }
    for (slot, want) in params.slices_mut().into_iter().zip(&expected) {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "tensor name not utf-8")?;
        if name != want {
            return Err(format!("expected tensor {want}, found {name}"));
        }
        let n = r.u64()? as usize;
        if n != slot.len() {
            return Err(format!("tensor {name}: expected {} values, found {n}", slot.len()));
        }
        for v in slot.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after last tensor".into());
    }
    TinyViT::from_parts(config, params).map_err(|e| e.to_string())
}

impl TinyViT {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &encode(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode(&bytes).map_err(|reason| Error::Decode {
            path: path.to_path_buf(),
            reason,
        })
    }
}
