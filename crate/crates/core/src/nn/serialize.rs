//! Flat binary parameter files.
//!
//! ```text
//! magic     8 bytes  "SARCDNN1"
//! count     u32 LE   number of tensors
//! per tensor:
//!   rank    u32 LE
//!   dims    rank x u64 LE
//!   values  prod(dims) x f64 LE
//! ```

use super::Param;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SARCDNN1";

pub fn encode_params(params: &[&Param]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }
}

/// `(shape, values)` for every stored tensor.
pub fn decode_params(bytes: &[u8]) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing SARCDNN1 header".into()));
    }
    let mut r = Reader { bytes, pos: 8 };
    let count = u32::from_le_bytes(r.take()?) as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = u32::from_le_bytes(r.take()?) as usize;
        if rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank} is implausible")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(r.take()?) as usize);
        }
        let n: usize = shape.iter().product();
        if n > (bytes.len() - r.pos) / 8 {
            return Err(Error::Format(format!("tensor of {n} values exceeds the file")));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(r.take()?));
        }
        out.push((shape, values));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut a = Param::zeros(&[2, 3]);
        a.value = vec![1.0, -2.5, 3.0, 0.0, f64::MIN_POSITIVE, 7.0];
        let b = Param::zeros(&[1]);
        let bytes = encode_params(&[&a, &b]);
        let back = decode_params(&bytes).unwrap();
        assert_eq!(back, vec![(vec![2, 3], a.value.clone()), (vec![1], vec![0.0])]);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_params(b"SARCDNN0\0\0\0\0").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_params(&extra).is_err());
    }
}
