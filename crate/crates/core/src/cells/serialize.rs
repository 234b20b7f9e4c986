//! Flat tensor container: a binary file of little-endian `f64` values
//! behind an 8-byte magic and a `u64` element count, plus a JSON manifest
//! naming each tensor's shape and offset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 8] = *b"STRLABF8";
pub const TENSOR_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub version: u32,
    pub dtype: String,
    pub total: usize,
    /// Caller-defined description of what the tensors belong to.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// A named tensor to be written.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub fn write_tensors(bin: &Path, manifest: &Path, meta: serde_json::Value, tensors: &[TensorRef<'_>]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::shape(format!("tensor {}", t.name), format!("{:?}", t.shape), t.data.len()));
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.data.len(),
        });
        offset += t.data.len();
    }
    let mut bytes = Vec::with_capacity(16 + 8 * offset);
    bytes.extend_from_slice(&TENSOR_MAGIC);
    bytes.extend_from_slice(&(offset as u64).to_le_bytes());
    for t in tensors {
        for v in t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(bin, bytes)?;
    let m = TensorManifest {
        version: TENSOR_FORMAT_VERSION,
        dtype: "f64le".into(),
        total: offset,
        meta,
        tensors: entries,
    };
    fs::write(manifest, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

/// Reads a container back; tensors are returned in manifest order.
pub fn read_tensors(bin: &Path, manifest: &Path) -> Result<(TensorManifest, Vec<Vec<f64>>)> {
    let m: TensorManifest = serde_json::from_str(&fs::read_to_string(manifest)?)?;
    if m.version != TENSOR_FORMAT_VERSION || m.dtype != "f64le" {
        return Err(Error::Checkpoint(format!(
            "unsupported container version {} dtype {}",
            m.version, m.dtype
        )));
    }
    let bytes = fs::read(bin)?;
    if bytes.len() < 16 || bytes[..8] != TENSOR_MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a tensor container", bin.display())));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[16..];
    if count != m.total || payload.len() != 8 * count {
        return Err(Error::Truncated {
            path: bin.to_path_buf(),
            expected: 16 + 8 * m.total,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut out = Vec::with_capacity(m.tensors.len());
    for e in &m.tensors {
        if e.shape.iter().product::<usize>() != e.len || e.offset + e.len > values.len() {
            return Err(Error::Checkpoint(format!("tensor {} has inconsistent extent", e.name)));
        }
        out.push(values[e.offset..e.offset + e.len].to_vec());
    }
    Ok((m, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (bin, js) = (dir.path().join("t.bin"), dir.path().join("t.json"));
        let a = [1.5, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI, -7.25];
        let b = [42.0];
        let tensors = [
            TensorRef { name: "a".into(), shape: vec![2, 3], data: &a },
            TensorRef { name: "b".into(), shape: vec![1], data: &b },
        ];
        write_tensors(&bin, &js, serde_json::json!({"k": 1}), &tensors).unwrap();
        let (m, vals) = read_tensors(&bin, &js).unwrap();
        assert_eq!(m.tensors[1].offset, 6);
        assert_eq!(m.meta["k"], 1);
        assert_eq!(vals[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), a.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(vals[1], b);
        assert_eq!(fs::metadata(&bin).unwrap().len(), 16 + 8 * 7);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (bin, js) = (dir.path().join("t.bin"), dir.path().join("t.json"));
        let a = [1.0, 2.0];
        write_tensors(&bin, &js, serde_json::Value::Null, &[TensorRef { name: "a".into(), shape: vec![2], data: &a }]).unwrap();
        let mut bytes = fs::read(&bin).unwrap();
        bytes.pop();
        fs::write(&bin, &bytes).unwrap();
        assert!(matches!(read_tensors(&bin, &js), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        fs::write(&bin, &bytes).unwrap();
        assert!(matches!(read_tensors(&bin, &js), Err(Error::Checkpoint(_))));
        let bad = [TensorRef { name: "a".into(), shape: vec![3], data: &a }];
        assert!(write_tensors(&bin, &js, serde_json::Value::Null, &bad).is_err());
    }
}
