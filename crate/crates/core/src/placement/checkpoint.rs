//! Policy checkpoint file, all integers and floats little-endian:
//!
//! | field            | type            |
//! |------------------|-----------------|
//! | magic            | `b"MAPNETPC"`   |
//! | format version   | u32 (= 1)       |
//! | arch field count | u32 (= 9)       |
//! | arch fields      | 9 × u32: ue_slots, ue_features, map_slots, map_features, self_features, embed, hidden1, hidden2, actions |
//! | policy version   | u64             |
//! | training step    | u64             |
//! | regime tag       | u16 length + UTF-8 bytes |
//! | weight count     | u64             |
//! | weights          | f64 × count     |

use std::path::Path;

use crate::error::{Error, Result};
use crate::placement::policy::{Architecture, PolicyParameters};

pub const MAGIC: &[u8; 8] = b"MAPNETPC";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &PolicyParameters, regime: &str) -> Vec<u8> {
    let a = &params.arch;
    let mut out = Vec::with_capacity(64 + params.weights.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let fields = [
        a.ue_slots,
        a.ue_features,
        a.map_slots,
        a.map_features,
        a.self_features,
        a.embed,
        a.hidden1,
        a.hidden2,
        a.actions,
    ];
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for f in fields {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.version.to_le_bytes());
    out.extend_from_slice(&params.step.to_le_bytes());
    out.extend_from_slice(&(regime.len() as u16).to_le_bytes());
    out.extend_from_slice(regime.as_bytes());
    out.extend_from_slice(&(params.weights.len() as u64).to_le_bytes());
    for w in &params.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<(PolicyParameters, String), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = r.u32()? as usize;
    if n != 9 {
        return Err(format!("expected 9 architecture fields, found {n}"));
    }
    let mut f = [0usize; 9];
    for v in f.iter_mut() {
        *v = r.u32()? as usize;
    }
    let arch = Architecture {
        ue_slots: f[0],
        ue_features: f[1],
        map_slots: f[2],
        map_features: f[3],
        self_features: f[4],
        embed: f[5],
        hidden1: f[6],
        hidden2: f[7],
        actions: f[8],
    };
    arch.validate().map_err(|e| e.to_string())?;
    let pversion = r.u64()?;
    let step = r.u64()?;
    let tag_len = r.u16()? as usize;
    let regime = std::str::from_utf8(r.take(tag_len)?).map_err(|e| e.to_string())?.to_string();
    let count = r.u64()? as usize;
    if count != arch.param_count() {
        return Err(format!("weight count {count} does not match architecture ({})", arch.param_count()));
    }
    let raw = r.take(count.checked_mul(8).ok_or("weight count overflow")?)?;
    let weights: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if r.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok((PolicyParameters { arch, weights, version: pversion, step }, regime))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(PolicyParameters, String)> {
    decode_inner(bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
}

pub fn save(path: &Path, params: &PolicyParameters, regime: &str) -> Result<()> {
    std::fs::write(path, encode(params, regime))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(PolicyParameters, String)> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::stream;

    #[test]
    fn roundtrip() {
        let mut p = PolicyParameters::random(Architecture::default(), 1.0, &mut stream(1, 0)).unwrap();
        p.version = 7;
        p.step = 12345;
        let bytes = encode(&p, "federated");
        let (q, tag) = decode(&bytes, Path::new("x")).unwrap();
        assert_eq!(p, q);
        assert_eq!(tag, "federated");
    }

    #[test]
    fn truncated_is_rejected() {
        let p = PolicyParameters::init(Architecture::default(), &mut stream(1, 0)).unwrap();
        let bytes = encode(&p, "codebook");
        let err = decode(&bytes[..bytes.len() - 3], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }));
    }
}
