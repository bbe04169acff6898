//! Binary checkpoint format.
//!
//! ```text
//! magic       8 bytes  "DCRCKPT\0"
//! version     u32
//! cfg_hash    u64      digest of the ranker config
//! provenance  u64      digest of the pipeline config that trained it
//! cfg_len     u32, then cfg_len bytes of JSON ranker config
//! n_items     u32
//! n_tensors   u32
//! per tensor: name_len u16, name bytes, rows u32, cols u32, rows*cols f32
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::config::RankerConfig;
use super::params::{Params, Tensor};
use super::ranker::Ranker;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DCRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Metadata read back from a checkpoint header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointInfo {
    pub config_hash: u64,
    pub provenance: u64,
}

impl Ranker {
    pub fn save<W: Write>(&self, mut w: W, provenance: u64) -> Result<()> {
        let cfg_json = serde_json::to_vec(self.config())?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&self.config().config_hash().to_le_bytes())?;
        w.write_all(&provenance.to_le_bytes())?;
        w.write_all(&(cfg_json.len() as u32).to_le_bytes())?;
        w.write_all(&cfg_json)?;
        w.write_all(&(self.n_items() as u32).to_le_bytes())?;
        let tensors = &self.params().tensors;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in tensors {
            w.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.rows as u32).to_le_bytes())?;
            w.write_all(&(t.cols as u32).to_le_bytes())?;
            for &v in &t.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint. With `expected` set, the stored config hash must
    /// match it.
    pub fn load<R: Read>(mut r: R, expected: Option<&RankerConfig>) -> Result<(Ranker, CheckpointInfo)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let info = CheckpointInfo {
            config_hash: read_u64(&mut r)?,
            provenance: read_u64(&mut r)?,
        };
        let cfg_len = read_u32(&mut r)? as usize;
        let mut cfg_json = vec![0u8; cfg_len];
        r.read_exact(&mut cfg_json)?;
        let cfg: RankerConfig = serde_json::from_slice(&cfg_json)?;
        if cfg.config_hash() != info.config_hash {
            return Err(Error::Checkpoint("embedded config does not match its hash".into()));
        }
        if let Some(exp) = expected {
            if exp.config_hash() != info.config_hash {
                return Err(Error::HashMismatch {
                    artifact: "checkpoint".into(),
                    expected: exp.config_hash(),
                    found: info.config_hash,
                });
            }
        }
        let n_items = read_u32(&mut r)? as usize;

        // The layout must be exactly what a fresh ranker of this config has.
        let template = Ranker::new(&cfg, n_items)?;
        let n_tensors = read_u32(&mut r)? as usize;
        if n_tensors != template.params().tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {n_tensors}",
                template.params().tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(n_tensors);
        for want in &template.params().tensors {
            let name_len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            if name != want.name.as_bytes() || rows != want.rows || cols != want.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has unexpected name or shape",
                    String::from_utf8_lossy(&name)
                )));
            }
            let mut t = Tensor::zeros(want.name, rows, cols);
            let mut buf = [0u8; 4];
            for v in t.data.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f32::from_le_bytes(buf) as f64;
            }
            tensors.push(t);
        }
        let params = Params { tensors };
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok((Ranker::from_parts(cfg, n_items, params), info))
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderKind;

    #[test]
    fn round_trip_is_exact() {
        for enc in EncoderKind::ALL {
            let cfg = RankerConfig {
                emb_dim: 5,
                encoder: enc,
                seed: 11,
                ..RankerConfig::default()
            };
            let r = Ranker::new(&cfg, 7).unwrap();
            let mut buf = Vec::new();
            r.save(&mut buf, 42).unwrap();
            let (back, info) = Ranker::load(buf.as_slice(), Some(&cfg)).unwrap();
            assert_eq!(back, r);
            assert_eq!(info.provenance, 42);
        }
    }

    #[test]
    fn rejects_other_config() {
        let cfg = RankerConfig::default();
        let r = Ranker::new(&cfg, 4).unwrap();
        let mut buf = Vec::new();
        r.save(&mut buf, 0).unwrap();
        let other = RankerConfig {
            emb_dim: 8,
            ..cfg
        };
        assert!(matches!(
            Ranker::load(buf.as_slice(), Some(&other)),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            Ranker::load(&b"NOTACKPT\x01\0\0\0"[..], None),
            Err(Error::Checkpoint(_))
        ));
        let r = Ranker::new(&RankerConfig::default(), 4).unwrap();
        let mut buf = Vec::new();
        r.save(&mut buf, 0).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Ranker::load(buf.as_slice(), None), Err(Error::Io(_))));
    }
}
