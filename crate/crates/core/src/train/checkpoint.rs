//! Binary record container.
//!
//! ```text
//! "DSTT"  u32 version  u64 record-count
//! per record: u32 name-len, name (UTF-8), u8 dtype, u8 rank, rank × u64 dims,
//!             little-endian payload of prod(dims) elements
//! ```
//!
//! All integers are little-endian. Dtype tags: 0 = f32, 1 = f64, 2 = u64, 3 = u8.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const MAGIC: &[u8; 4] = b"DSTT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

impl Payload {
    fn tag(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::U64(_) => 2,
            Payload::U8(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U64(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub payload: Payload,
}

impl Record {
    pub fn tensor<T: Element>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let payload = match T::DTYPE {
            crate::tensor::DType::F32 => Payload::F32(t.data().iter().map(|v| v.to_f32().unwrap()).collect()),
            crate::tensor::DType::F64 => Payload::F64(t.data().iter().map(|v| v.to_f64().unwrap()).collect()),
        };
        Self { name: name.into(), dims: t.shape().to_vec(), payload }
    }

    pub fn f64s(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), dims: vec![values.len()], payload: Payload::F64(values) }
    }

    pub fn u64s(name: impl Into<String>, values: Vec<u64>) -> Self {
        Self { name: name.into(), dims: vec![values.len()], payload: Payload::U64(values) }
    }

    pub fn bytes(name: impl Into<String>, values: Vec<u8>) -> Self {
        Self { name: name.into(), dims: vec![values.len()], payload: Payload::U8(values) }
    }
}

/// Ordered records with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub records: Vec<Record>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| corrupt(format!("missing record {name:?}")))
    }

    pub fn f32_tensor(&self, name: &str) -> Result<Tensor<f32>> {
        match self.get(name)? {
            Record { dims, payload: Payload::F32(v), .. } => Tensor::from_vec(dims, v.clone()),
            _ => Err(corrupt(format!("record {name:?} is not f32"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match &self.get(name)?.payload {
            Payload::F64(v) => Ok(v),
            _ => Err(corrupt(format!("record {name:?} is not f64"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.payload {
            Payload::U64(v) => Ok(v),
            _ => Err(corrupt(format!("record {name:?} is not u64"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match self.u64s(name)? {
            [v] => Ok(*v),
            other => Err(corrupt(format!("record {name:?} holds {} values, expected 1", other.len()))),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.payload {
            Payload::U8(v) => Ok(v),
            _ => Err(corrupt(format!("record {name:?} is not bytes"))),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            if !seen.insert(r.name.as_str()) {
                return Err(corrupt(format!("duplicate record {:?}", r.name)));
            }
            if r.dims.iter().product::<usize>() != r.payload.len() {
                return Err(corrupt(format!("record {:?}: dims {:?} vs {} values", r.name, r.dims, r.payload.len())));
            }
            if r.dims.len() > u8::MAX as usize {
                return Err(corrupt(format!("record {:?} has rank {}", r.name, r.dims.len())));
            }
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(r.payload.tag());
            out.push(r.dims.len() as u8);
            for &d in &r.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &r.payload {
                Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::U8(v) => out.extend_from_slice(v),
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}, expected {VERSION}")));
        }
        let count = r.u64()?;
        let mut seen = BTreeSet::new();
        let mut records = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| corrupt(format!("record name at byte {} is not UTF-8", r.pos - len)))?;
            if !seen.insert(name.clone()) {
                return Err(corrupt(format!("duplicate record {name:?}")));
            }
            let tag = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            let mut numel = 1usize;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?).map_err(|_| corrupt("dimension overflows usize"))?;
                numel = numel.checked_mul(d).ok_or_else(|| corrupt("element count overflows"))?;
                dims.push(d);
            }
            let width = match tag {
                0 => 4,
                1 | 2 => 8,
                3 => 1,
                other => return Err(corrupt(format!("record {name:?} has unknown dtype tag {other}"))),
            };
            let raw = r.take(numel.checked_mul(width).ok_or_else(|| corrupt("payload size overflows"))?)?;
            let payload = match tag {
                0 => Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => Payload::U64(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => Payload::U8(raw.to_vec()),
            };
            records.push(Record { name, dims, payload });
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { records })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            corrupt(format!("truncated: needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
