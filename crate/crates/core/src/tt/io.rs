//! Checkpoint format: 8-byte magic `HXTT0001`, little-endian u64 header
//! length, UTF-8 JSON header, then every site tensor in order as row-major
//! little-endian complex128 (real, imaginary).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::TensorTrain;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HXTT0001";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    physical_dim: usize,
    bond_dims: Vec<usize>,
    shapes: Vec<[usize; 3]>,
    log_norm: f64,
    center: Option<usize>,
}

pub fn write_checkpoint<W: Write>(tt: &TensorTrain, mut w: W) -> Result<()> {
    let mut bonds = vec![1];
    bonds.extend(tt.bond_dims());
    bonds.push(1);
    let header = Header {
        dtype: "complex128".into(),
        physical_dim: tt.phys_dim(),
        bond_dims: bonds,
        shapes: tt
            .tensors()
            .iter()
            .map(|t| {
                let (a, b, c) = t.dim();
                [a, b, c]
            })
            .collect(),
        log_norm: tt.log_norm,
        center: tt.center(),
    };
    let h = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(h.len() as u64).to_le_bytes())?;
    w.write_all(&h)?;
    for t in tt.tensors() {
        let mut buf = Vec::with_capacity(t.len() * 16);
        for z in t.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<TensorTrain> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument("not a tensor-train checkpoint".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut h = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut h)?;
    let header: Header = serde_json::from_slice(&h)?;
    if header.dtype != "complex128" {
        return Err(Error::InvalidArgument(format!("unsupported dtype {}", header.dtype)));
    }
    let mut tensors = Vec::with_capacity(header.shapes.len());
    for [a, b, c] in header.shapes {
        let mut raw = vec![0u8; a * b * c * 16];
        r.read_exact(&mut raw)?;
        let data: Vec<C64> = raw
            .chunks_exact(16)
            .map(|ch| {
                C64::new(
                    f64::from_le_bytes(ch[..8].try_into().unwrap()),
                    f64::from_le_bytes(ch[8..].try_into().unwrap()),
                )
            })
            .collect();
        tensors.push(Array3::from_shape_vec((a, b, c), data)?);
    }
    let mut tt = TensorTrain::from_tensors(tensors)?;
    if tt.phys_dim() != header.physical_dim {
        return Err(Error::DimensionMismatch("header physical_dim disagrees with tensors".into()));
    }
    tt.log_norm = header.log_norm;
    tt.assume_center(header.center);
    Ok(tt)
}

pub fn save_checkpoint(tt: &TensorTrain, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(tt, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TensorTrain> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::testutil::random_tt;

    #[test]
    fn roundtrip_bit_exact() {
        let mut tt = random_tt(5, 4, 3, 2);
        tt.canonicalize(2).unwrap();
        tt.log_norm = -1.25;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tt");
        save_checkpoint(&tt, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, tt);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"nonsense-bytes-here"[..]).is_err());
    }
}
