//! Binary checkpoint of named tensors.
//!
//! Layout (little-endian): magic `SPOTCKPT`, `u32` version, `u32` tensor
//! count, then per tensor `u32` name length, UTF-8 name, `u32` rank, `u32`
//! dims, and the `f32` payload in row-major order.

use super::params::Params;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SPOTCKPT";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(params: &Params<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedPayload(format!(
                "need {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(buf: &[u8]) -> Result<Params<T>> {
    if buf.len() < 8 || &buf[..8] != MAGIC {
        return Err(Error::BadMagic("checkpoint".into()));
    }
    let mut r = Reader { buf, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut params = Params::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Parse(format!("tensor name: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        let mut n: usize = 1;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            n = n
                .checked_mul(d)
                .filter(|&n| n <= (buf.len() / 4))
                .ok_or_else(|| Error::DimensionOverflow(format!("tensor `{name}`")))?;
            shape.push(d);
        }
        let bytes = r.take(n * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(params)
}

pub fn save<T: Scalar>(path: &Path, params: &Params<T>) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Params<T>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Params<f32> {
        let mut p = Params::new();
        p.insert(
            "a.weight",
            Tensor::new(vec![2, 3], vec![1.5, -2.0, 0.0, 3.25, 1e-3, -7.0]).unwrap(),
        );
        p.insert("a.bias", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap());
        p
    }

    #[test]
    fn round_trip_bitwise() {
        let p = sample();
        let q: Params<f32> = decode(&encode(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn corrupted_inputs() {
        let mut bytes = encode(&sample());
        assert!(matches!(
            decode::<f32>(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedPayload(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(decode::<f32>(&bytes), Err(Error::BadMagic(_))));
    }
}
