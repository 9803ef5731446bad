//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `"CGCN"`, `u32` version, `u32` config length, config JSON,
//! `u32` tensor count, then per tensor `u16` name length, name, `u8` rank,
//! `u32` extents, `f32` values; finally a `u32` CRC32 of everything before it.

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGCN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(config: &ModelConfig, params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.parameter_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let shape = p.value.shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, ParamStore)> {
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("CRC mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((config, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ModelConfig, ParamStore) {
        let mut params = ParamStore::new();
        params.insert("a.w", Tensor::from_fn(&[2, 3], |i| i as f64 * 0.25));
        params.insert("b", Tensor::full(&[1], -1.5));
        (ModelConfig::default(), params)
    }

    #[test]
    fn round_trip() {
        let (cfg, params) = sample();
        let bytes = encode_checkpoint(&cfg, &params);
        let (cfg2, params2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params2.value("a.w"), params.value("a.w"));
        assert_eq!(encode_checkpoint(&cfg2, &params2), bytes);
    }

    #[test]
    fn corruption_is_rejected() {
        let (cfg, params) = sample();
        let mut bytes = encode_checkpoint(&cfg, &params);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(m)) if m.contains("CRC")));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let (cfg, params) = sample();
        let mut bytes = encode_checkpoint(&cfg, &params);
        bytes[4] = 9;
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
    }
}
