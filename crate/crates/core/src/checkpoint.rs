//! Binary checkpoint: versioned header, JSON metadata, named tensor table.
//!
//! Layout (little endian):
//!
//! ```text
//! b"GCLIPCKP" | u32 version | u64 header_len | header JSON
//! u64 tensor_count | { u32 name_len | name | u64 rows | u64 cols | f64 data[rows*cols] }*
//! ```
//!
//! The header holds the [`GraphEncoderConfig`] and free-form metadata. Tensor
//! data is row-major.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GraphEncoder, GraphEncoderConfig, ParamStore};

pub const MAGIC: &[u8; 8] = b"GCLIPCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub encoder: GraphEncoderConfig,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub encoder: GraphEncoder,
}

impl Checkpoint {
    pub fn new(encoder: GraphEncoder, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self {
            header: CheckpointHeader {
                encoder: encoder.config.clone(),
                metadata,
            },
            encoder,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(64 + header.len() + 8 * self.encoder.params.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.encoder.params.len() as u64).to_le_bytes());
        for (name, p) in self.encoder.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.value.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(p.value.ncols() as u64).to_le_bytes());
            for x in p.value.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let header_len = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)?;
        header.encoder.validate()?;
        let expected = header.encoder.param_shapes();

        let count = r.u64()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "tensor count {count} does not match config ({})",
                expected.len()
            )));
        }
        let mut params = ParamStore::default();
        for (want_name, want_shape) in expected {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let shape = (r.u64()? as usize, r.u64()? as usize);
            if name != want_name || shape != want_shape {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {want_name} {want_shape:?}, found {name} {shape:?}"
                )));
            }
            let data = (0..shape.0 * shape.1).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let value = Array2::from_shape_vec(shape, data).expect("length checked");
            params.insert(name, value);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after tensor table".into()));
        }
        let encoder = GraphEncoder {
            config: header.encoder.clone(),
            params,
        };
        Ok(Self { header, encoder })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let enc = GraphEncoder::init(
            GraphEncoderConfig {
                layers: 1,
                hidden: 8,
                heads: 2,
                pe_dim: 4,
                d_text: 6,
                preset: None,
            },
            9,
        )
        .unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("lr".into(), serde_json::json!(1e-5));
        Checkpoint::new(enc, meta)
    }

    #[test]
    fn bytes_round_trip() {
        let ckpt = sample();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn rejects_truncation() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
