//! Flat binary container for named f64 arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SAGANCK\0"
//! version    u32      currently 1
//! n_meta     u32
//! n_meta x { key_len u32, key utf-8, val_len u32, val utf-8 }
//! n_records  u32
//! n_records x {
//!     name_len u32, name utf-8,
//!     ndim u32, ndim x u64 extents,
//!     product(extents) x f64 (IEEE-754 binary64, little-endian)
//! }
//! ```
//!
//! Metadata and records are written in the order given; readers reject
//! trailing bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"SAGANCK\0";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub records: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.records.push((name.into(), shape, data));
    }

    pub fn record(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.records
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, shape, data) in &self.records {
            let n: usize = shape.iter().product();
            if n != data.len() {
                return Err(Error::Format(format!(
                    "record {name}: shape {shape:?} holds {n} values, got {}",
                    data.len()
                )));
            }
            put_str(&mut out, name);
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CONTAINER_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut c = Container::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            c.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Format("record too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            c.records.push((name, shape, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(c)
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
            .ok_or_else(|| Error::Format("truncated container".into()))?;
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

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Writes to a temporary sibling and renames it into place, so readers
/// never observe a partial file.
pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    crate::io::write_atomic(path, &c.to_bytes()?)
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Container::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let c = Container::new().with_meta("seed", "7");
        let b = c.to_bytes().unwrap();
        assert_eq!(&b[..8], CONTAINER_MAGIC);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let mut c = Container::new();
        c.push("w", vec![2], vec![1.0, 2.0]);
        let b = c.to_bytes().unwrap();
        assert!(Container::from_bytes(&b[..b.len() - 1]).is_err());
        let mut longer = b.clone();
        longer.push(0);
        assert!(Container::from_bytes(&longer).is_err());
        let mut bad = b;
        bad[0] = b'X';
        assert!(Container::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(proptest::num::f64::ANY, 1..40),
                     key in "[a-z.]{1,12}") {
            let mut c = Container::new().with_meta(key.clone(), "v");
            c.push(key, vec![values.len()], values.clone());
            let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back.records.len(), 1);
            let bits: Vec<u64> = back.records[0].2.iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, want);
            prop_assert_eq!(back.meta, c.meta);
        }
    }
}
