//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "WEARECKP"
//! version    u32       CHECKPOINT_VERSION
//! header     u32 len + UTF-8 bytes (configuration echo, seed)
//! count      u32
//! count x {  u32 len + UTF-8 name, u32 rows, u32 cols, rows*cols f32 }
//! digest     32 bytes  SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WEARECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub tensors: Vec<(String, Matrix<f32>)>,
}

impl Checkpoint {
    pub fn from_store<T: Real>(header: impl Into<String>, store: &ParamStore<T>) -> Self {
        Checkpoint {
            header: header.into(),
            tensors: store.slots().map(|s| (s.name.clone(), s.value.cast())).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("digest mismatch, file is corrupted".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Matrix::from_vec(rows, cols, data)));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after tensor table".into()));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copies tensors into `store`, requiring identical names and shapes.
    pub fn apply_to<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (slot, (name, m)) in store.slots_mut().zip(&self.tensors) {
            if &slot.name != name || slot.value.shape() != m.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {:?} does not match model tensor {} {:?}",
                    m.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = m.cast();
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}
