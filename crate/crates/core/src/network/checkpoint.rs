//! Checkpoint layout, little-endian:
//!
//! ```text
//! "LNT5" | version u16 | spec fingerprint u64
//! per tensor (layer order, weight then bias): rank u8 | dims u32 × rank | f32 × len
//! ```

use std::fs;
use std::path::Path;

use super::{LayerSpec, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LNT5";
pub const CHECKPOINT_VERSION: u16 = 1;

impl NetworkParams<f32> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 4 * self.parameter_count() + 64);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec.fingerprint().to_le_bytes());
        for t in self.tensors() {
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint for `spec`. Nothing is returned unless the whole
    /// file validates.
    pub fn from_checkpoint_bytes(bytes: &[u8], spec: &LayerSpec) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC.to_vec(),
                found: magic.to_vec(),
            });
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let found = u64::from_le_bytes(r.array()?);
        let expected = spec.fingerprint();
        if found != expected {
            return Err(Error::Fingerprint { expected, found });
        }

        let template = NetworkParams::<f32>::zeros(spec)?;
        let mut tensors = Vec::new();
        for want in template.tensors() {
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.array().map(|b| u32::from_le_bytes(b) as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != want.shape() {
                return Err(Error::Format(format!(
                    "tensor {} has shape {dims:?}, architecture needs {:?}",
                    tensors.len(),
                    want.shape()
                )));
            }
            let raw = r.take(4 * want.len())?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor {} in checkpoint", tensors.len())));
            }
            tensors.push(Tensor::new(&dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        NetworkParams::from_tensors(spec, tensors, None)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "checkpoint ends at byte {}, needed {end}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn save_checkpoint(params: &NetworkParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, spec: &LayerSpec) -> Result<NetworkParams<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NetworkParams::from_checkpoint_bytes(&bytes, spec)
}
