//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TLSTMCKP"
//! version   u32      1
//! kind      u8       0 baseline, 1 lstm, 2 tlstmv1, 3 tlstmv2
//! dims      5 x u32  labels, hidden, features, encoder_hidden, input
//! divisor   f64      δ divisor
//! hash      u32 length + UTF-8 bytes (training config hash)
//! blocks    u32 count, then per block:
//!             u32 name length + UTF-8 name, u64 value count, f64 values
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{Model, ModelDims, ModelKind};

const MAGIC: &[u8; 8] = b"TLSTMCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config_hash: String,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let d = model.dims();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.kind().code());
    for v in [d.labels, d.hidden, d.features, d.encoder_hidden, d.input] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.delta_divisor().to_le_bytes());
    put_str(&mut out, &ckpt.config_hash);
    let blocks = model.blocks();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, values) in blocks {
        put_str(&mut out, name);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format("checkpoint", format!("truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format("checkpoint", "string is not UTF-8"))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic bytes"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let code = r.take(1)?[0];
    let kind = ModelKind::from_code(code)
        .ok_or_else(|| Error::format("checkpoint", format!("unknown model kind {code}")))?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let dims = ModelDims {
        labels: dims[0],
        hidden: dims[1],
        features: dims[2],
        encoder_hidden: dims[3],
        input: dims[4],
    };
    let divisor = r.f64()?;
    if !(divisor > 0.0 && divisor.is_finite()) {
        return Err(Error::format("checkpoint", format!("delta divisor {divisor}")));
    }
    let config_hash = r.string()?;
    let mut model = Model::zeros(kind, dims, divisor);
    let count = r.u32()? as usize;
    let mut blocks = model.blocks_mut();
    if count != blocks.len() {
        return Err(Error::format(
            "checkpoint",
            format!("{count} blocks, a {} model has {}", kind.name(), blocks.len()),
        ));
    }
    for (expected, block) in blocks.iter_mut() {
        let name = r.string()?;
        if name != *expected {
            return Err(Error::format("checkpoint", format!("block {name}, expected {expected}")));
        }
        let n = r.u64()? as usize;
        if n != block.len() {
            return Err(Error::format(
                "checkpoint",
                format!("block {name} has {n} values, expected {}", block.len()),
            ));
        }
        for v in block.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Ok(Checkpoint { model, config_hash })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { what, reason } => Error::Format {
            what,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}
