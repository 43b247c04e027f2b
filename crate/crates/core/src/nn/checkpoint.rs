//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! magic   b"FMCK"
//! version u32
//! meta    u64 length + UTF-8 JSON
//! count   u32
//! count x { u32 name length, name, u32 ndim, ndim x u64 dim, f64 payload }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use super::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"FMCK";
pub const VERSION: u32 = 1;

pub fn write_checkpoint(mut w: impl Write, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    let meta = serde_json::to_vec(meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let t = store.value(id);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Upper bound on any single length field, to fail fast on corrupt input.
const MAX_LEN: u64 = 1 << 32;

pub fn read_checkpoint(mut r: impl Read) -> Result<(ParamStore, serde_json::Value)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u64(&mut r)?;
    if meta_len > MAX_LEN {
        return Err(NnError::Checkpoint("metadata too large".into()));
    }
    let mut meta = vec![0u8; meta_len as usize];
    r.read_exact(&mut meta)?;
    let meta: serde_json::Value = serde_json::from_slice(&meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nl = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; nl];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)?;
        if ndim == 0 || ndim > 8 {
            return Err(NnError::Checkpoint(format!("{name}: bad rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut n: u64 = 1;
        for _ in 0..ndim {
            let d = read_u64(&mut r)?;
            n = n.saturating_mul(d);
            shape.push(d as usize);
        }
        if n > MAX_LEN {
            return Err(NnError::Checkpoint(format!("{name}: tensor too large")));
        }
        let mut data = Vec::with_capacity(n as usize);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        store.add(&name, Tensor::new(shape, data)?)?;
    }
    Ok((store, meta))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    let f = File::create(path).map_err(|e| NnError::io(path, e))?;
    write_checkpoint(BufWriter::new(f), store, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let f = File::open(path).map_err(|e| NnError::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

impl ParamStore {
    /// Copies every parameter of `self` from the same-named tensor of `src`.
    pub fn assign_from(&mut self, src: &ParamStore) -> Result<()> {
        let ids: Vec<_> = self.ids().collect();
        for id in ids {
            let name = self.name(id).to_string();
            let sid = src.id(&name).ok_or_else(|| NnError::Checkpoint(format!("checkpoint lacks {name}")))?;
            self.set(id, src.value(sid).clone())?;
        }
        Ok(())
    }
}
