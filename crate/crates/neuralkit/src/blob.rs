//! Versioned parameter blobs: a six-byte magic, a length-prefixed UTF-8
//! architecture header, the tensor shapes, then every parameter as
//! little-endian `f32`.

use std::io::{Read, Write};

use crate::error::NnError;
use crate::{Result, Scalar, Tensor};

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_blob<T: Scalar>(w: &mut impl Write, magic: &[u8; 6], header: &str, params: &[&Tensor<T>]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.shape().len() as u32).to_le_bytes())?;
        for &d in p.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for p in params {
        for &x in p.data() {
            w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_blob<T: Scalar>(r: &mut impl Read, magic: &[u8; 6]) -> Result<(String, Vec<Tensor<T>>)> {
    let mut m = [0u8; 6];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(NnError::Blob(format!(
            "magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let hlen = read_u32(r)? as usize;
    if hlen > 1 << 20 {
        return Err(NnError::Blob("header too long".into()));
    }
    let mut hb = vec![0u8; hlen];
    r.read_exact(&mut hb)?;
    let header = String::from_utf8(hb).map_err(|e| NnError::Blob(e.to_string()))?;
    let count = read_u32(r)? as usize;
    let mut shapes = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let rank = read_u32(r)? as usize;
        if rank > crate::tensor::MAX_DIMS {
            return Err(NnError::Blob(format!("rank {rank}")));
        }
        let mut s = Vec::with_capacity(rank);
        for _ in 0..rank {
            s.push(read_u32(r)? as usize);
        }
        shapes.push(s);
    }
    let mut out = Vec::with_capacity(shapes.len());
    for s in shapes {
        let n: usize = s.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.push(Tensor::from_vec(&s, data)?);
    }
    Ok((header, out))
}

/// Copies loaded tensors into a model's parameters, checking shapes.
pub fn load_into<T: Scalar>(params: Vec<&mut Tensor<T>>, loaded: Vec<Tensor<T>>) -> Result<()> {
    if params.len() != loaded.len() {
        return Err(NnError::Blob(format!(
            "model has {} tensors, blob has {}",
            params.len(),
            loaded.len()
        )));
    }
    for (i, (p, l)) in params.into_iter().zip(loaded).enumerate() {
        if p.shape() != l.shape() {
            return Err(NnError::Blob(format!(
                "tensor {i}: model shape {:?}, blob shape {:?}",
                p.shape(),
                l.shape()
            )));
        }
        p.data_mut().copy_from_slice(l.data());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_preserves_f32_values() {
        let a = Tensor::<f32>::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-7, -1e7]).unwrap();
        let b = Tensor::<f32>::from_vec(&[1], vec![42.0]).unwrap();
        let mut buf = Vec::new();
        write_blob(&mut buf, b"GPRED1", "unet base=4", &[&a, &b]).unwrap();
        let (h, t) = read_blob::<f32>(&mut buf.as_slice(), b"GPRED1").unwrap();
        assert_eq!(h, "unet base=4");
        assert_eq!(t, vec![a, b]);
        assert!(read_blob::<f32>(&mut buf.as_slice(), b"GDIFF1").is_err());
    }
}
