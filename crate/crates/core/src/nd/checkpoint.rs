//! `KDNP1` checkpoint container.
//!
//! Layout: magic, `u64` entry count, then per entry `u64` name length, UTF-8
//! name, `u64` rank, `rank` extents as `u64`, and the payload as `f32`.
//! All integers and floats are little-endian.

use alloc::string::String;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"KDNP1";

pub fn encode_checkpoint<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u64).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(alloc::format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self, limit: usize, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > limit as u64 {
            return Err(Error::Checkpoint(alloc::format!("{what} {v} out of range")));
        }
        Ok(v as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.usize(bytes.len(), "entry count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.usize(bytes.len(), "name length")?;
        let name = core::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
            .into();
        let rank = r.usize(64, "rank")?;
        let shape = (0..rank)
            .map(|_| r.usize(bytes.len(), "extent"))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n.checked_mul(4).is_none_or(|b| b > bytes.len()) {
            return Err(Error::Checkpoint("payload larger than file".into()));
        }
        let data = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_through_f32() {
        let a = Tensor::new(alloc::vec![2, 3], alloc::vec![0.1, -2.5, 3.0, 1e-3, 7.25, 0.3333]).unwrap();
        let b = Tensor::scalar(42.0);
        let bytes = encode_checkpoint([("a.w", &a), ("b", &b)]);
        assert_eq!(&bytes[..5], b"KDNP1");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a.w");
        assert_eq!(back[0].1, a.to_f32_precision());
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn rejects_corruption() {
        let a = Tensor::scalar(1.0);
        let mut bytes = encode_checkpoint([("x", &a)]);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'Q';
        assert!(decode_checkpoint(&bytes).is_err());
        let mut extra = encode_checkpoint([("x", &a)]);
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
