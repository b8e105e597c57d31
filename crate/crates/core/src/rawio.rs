//! Little-endian binary encoding shared by tensor files and checkpoints.
//!
//! A tensor record is: `u32` rank, `rank × u64` extents, then
//! `product(extents) × f64` values, all little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"CLSGTNSR";

pub fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> io::Result<()> {
    write_u32(w, t.rank() as u32)?;
    for &e in t.shape() {
        write_u64(w, e as u64)?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_bytes(r: &mut impl Read, limit: usize) -> io::Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > limit {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("length {n} exceeds limit {limit}"),
        ));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_tensor(r: &mut impl Read) -> io::Result<Tensor> {
    let rank = read_u32(r)? as usize;
    if rank > 8 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("implausible tensor rank {rank}"),
        ));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(shape, data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// Encodes a standalone tensor file: magic followed by one tensor record.
pub fn encode_tensor_file(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + t.len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

pub fn decode_tensor_file(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::format(path, "not a tensor file"));
    }
    let t = read_tensor(&mut r).map_err(|e| Error::format(path, e.to_string()))?;
    if !r.is_empty() {
        return Err(Error::format(path, "trailing bytes after tensor"));
    }
    Ok(t)
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor_file(path, &bytes)
}

/// Writes `bytes` through a sibling temporary file and a rename, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_file_round_trips_bit_exact() {
        let t = Tensor::new(
            vec![2, 3],
            vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.5, 3.0],
        )
        .unwrap();
        let bytes = encode_tensor_file(&t);
        let back = decode_tensor_file(Path::new("mem"), &bytes).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let t = Tensor::zeros(&[4]);
        let bytes = encode_tensor_file(&t);
        assert!(decode_tensor_file(Path::new("x"), &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_tensor_file(Path::new("x"), &bad).is_err());
    }
}
