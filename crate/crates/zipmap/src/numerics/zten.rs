//! ZTEN on-disk tensor format and the multi-tensor archive built on it.
//!
//! Layout of a single tensor:
//!
//! ```text
//! magic "ZTEN" | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u32 LE extents | row-major LE payload
//! ```
//!
//! An archive is `magic "ZTAR" | u32 LE count`, then per entry
//! `u32 LE name-len | name bytes (utf-8) | u64 LE blob-len | ZTEN blob`.
//! Entry order is preserved; round-trips are bitwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::{Real, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ZTEN";
const ARCHIVE_MAGIC: &[u8; 4] = b"ZTAR";

pub fn write_zten<T: Real>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_zten(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_zten<T: Real>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    decode_zten(&mut r).map_err(|msg| Error::format(path, msg))
}

fn encode_zten<T: Real, W: Write>(w: &mut W, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[T::DTYPE_CODE, t.rank() as u8])?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    match T::DTYPE_CODE {
        0 => {
            for &v in t.data() {
                w.write_all(&(v.into_f64() as f32).to_le_bytes())?;
            }
        }
        _ => {
            for &v in t.data() {
                w.write_all(&v.into_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn decode_zten<T: Real, R: Read>(r: &mut R) -> std::result::Result<Tensor<T>, String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| e.to_string())?;
    if &magic != MAGIC {
        return Err(format!("bad magic {magic:?}, expected ZTEN"));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head).map_err(|e| e.to_string())?;
    let (dtype, rank) = (head[0], head[1] as usize);
    if dtype != T::DTYPE_CODE {
        return Err(format!("dtype code {dtype} does not match requested element type"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| e.to_string())?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    match dtype {
        0 => {
            let mut b = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut b).map_err(|e| e.to_string())?;
                data.push(T::from_f64(f32::from_le_bytes(b) as f64));
            }
        }
        _ => {
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b).map_err(|e| e.to_string())?;
                data.push(T::from_f64(f64::from_le_bytes(b)));
            }
        }
    }
    Ok(Tensor::from_vec(&shape, data))
}

/// Ordered, named collection of tensors in one file.
pub struct ZtenArchive<T: Real> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for ZtenArchive<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ZtenArchive<T> {
    pub fn new() -> Self {
        ZtenArchive { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Error::io(path, e);
        w.write_all(ARCHIVE_MAGIC).map_err(io)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes()).map_err(io)?;
        for (name, t) in &self.entries {
            let mut blob = Vec::new();
            encode_zten(&mut blob, t).map_err(io)?;
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(name.as_bytes()).map_err(io)?;
            w.write_all(&(blob.len() as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&blob).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |msg: String| Error::format(path, msg);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != ARCHIVE_MAGIC {
            return Err(bad(format!("bad magic {magic:?}, expected ZTAR")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|e| bad(e.to_string()))?;
        let count = u32::from_le_bytes(b4) as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b4).map_err(|e| bad(e.to_string()))?;
            let name_len = u32::from_le_bytes(b4) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|e| bad(e.to_string()))?;
            let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8).map_err(|e| bad(e.to_string()))?;
            let blob_len = u64::from_le_bytes(b8) as usize;
            let mut blob = vec![0u8; blob_len];
            r.read_exact(&mut blob).map_err(|e| bad(e.to_string()))?;
            let t = decode_zten(&mut blob.as_slice()).map_err(bad)?;
            entries.push((name, t));
        }
        Ok(ZtenArchive { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zten_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.zten");
        let t = Tensor::<f32>::from_vec(&[2, 3], vec![1.5, -2.25, 0.0, 3.0e-7, 1e9, -0.1]);
        write_zten(&path, &t).unwrap();
        let u: Tensor<f32> = read_zten(&path).unwrap();
        assert_eq!(t.shape(), u.shape());
        for (a, b) in t.data().iter().zip(u.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zten_rejects_dtype_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.zten");
        write_zten(&path, &Tensor::<f32>::zeros(&[2])).unwrap();
        assert!(read_zten::<f64>(&path).is_err());
    }

    #[test]
    fn archive_roundtrip_preserves_order_and_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.zta");
        let mut ar = ZtenArchive::<f64>::new();
        ar.push("w1", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        ar.push("b", Tensor::from_vec(&[1], vec![-0.5]));
        ar.save(&path).unwrap();
        let back = ZtenArchive::<f64>::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.entries()[0].0, "w1");
        assert_eq!(back.get("b").unwrap().data(), &[-0.5]);
    }
}
