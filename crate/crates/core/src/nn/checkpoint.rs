use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Param, Real};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SSCK";
const VERSION: u32 = 1;

/// Named f32 tensors plus a model kind and a free-form config string.
///
/// Layout (little-endian): magic `SSCK`, u32 version, u32-length-prefixed
/// kind and config strings, u32 tensor count, then per tensor a
/// u16-length-prefixed name, u64 element count and the f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: String,
    pub tensors: Vec<(String, Vec<f32>)>,
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
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn from_state<T: Real>(kind: &str, config: &str, state: &[&Param<T>]) -> Self {
        Self {
            kind: kind.into(),
            config: config.into(),
            tensors: state
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        p.value.iter().map(|v| v.as_f64() as f32).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for s in [&self.kind, &self.config] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, data) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let n = r.u32()? as usize;
        let kind = r.string(n)?;
        let n = r.u32()? as usize;
        let config = r.string(n)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = r.u16()? as usize;
            let name = r.string(n)?;
            let len = r.u64()?;
            let bytes_len = usize::try_from(len)
                .ok()
                .and_then(|l| l.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            let data = r
                .take(bytes_len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            kind,
            config,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Copies stored values into `state`, matching by name. Every parameter
    /// must be present with the right size.
    pub fn restore<T: Real>(&self, state: Vec<&mut Param<T>>) -> Result<()> {
        let by_name: HashMap<&str, &Vec<f32>> =
            self.tensors.iter().map(|(n, d)| (n.as_str(), d)).collect();
        if by_name.len() != self.tensors.len() {
            return Err(Error::Format(
                "checkpoint has duplicate tensor names".into(),
            ));
        }
        if state.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                state.len()
            )));
        }
        for p in state {
            let data = by_name
                .get(p.name.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {}", p.name)))?;
            if data.len() != p.value.len() {
                return Err(Error::Format(format!(
                    "tensor {} has {} values, model expects {}",
                    p.name,
                    data.len(),
                    p.value.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "tensor {} holds non-finite values",
                    p.name
                )));
            }
            for (dst, &v) in p.value.iter_mut().zip(data.iter()) {
                *dst = T::lit(v as f64);
            }
        }
        Ok(())
    }
}
