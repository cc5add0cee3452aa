//! Binary model snapshots: header, layout, then `theta`, `fisher` and
//! `theta_old` as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use super::params::{Layout, ModelDims, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVWM";
pub const FORMAT_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let d = &params.dims;
    let mut out = Vec::with_capacity(64 + 24 * params.theta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [d.obs, d.action, d.deter, d.stoch, d.hidden] {
        put_u64(&mut out, v as u64);
    }
    put_u64(&mut out, params.layout.tensors.len() as u64);
    for t in &params.layout.tensors {
        put_u64(&mut out, t.name.len() as u64);
        out.extend_from_slice(t.name.as_bytes());
        for v in [t.offset, t.rows, t.cols] {
            put_u64(&mut out, v as u64);
        }
    }
    put_u64(&mut out, params.theta.len() as u64);
    for vec in [&params.theta, &params.fisher, &params.theta_old] {
        for x in vec.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Snapshot("truncated model snapshot".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Snapshot("size overflows usize".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Snapshot("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Snapshot("not a model snapshot".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Snapshot(format!("unsupported snapshot version {version}")));
    }
    let dims = ModelDims {
        obs: c.usize()?,
        action: c.usize()?,
        deter: c.usize()?,
        stoch: c.usize()?,
        hidden: c.usize()?,
    };
    let layout = Layout::new(&dims);
    let n_tensors = c.usize()?;
    if n_tensors != layout.tensors.len() {
        return Err(Error::Snapshot("layout does not match the model dimensions".into()));
    }
    for t in &layout.tensors {
        let name_len = c.usize()?;
        let name = c.take(name_len)?;
        let (offset, rows, cols) = (c.usize()?, c.usize()?, c.usize()?);
        if name != t.name.as_bytes() || offset != t.offset || rows != t.rows || cols != t.cols {
            return Err(Error::Snapshot(format!("layout entry for {} does not match", t.name)));
        }
    }
    let n = c.usize()?;
    if n != layout.len() {
        return Err(Error::Snapshot("parameter count does not match layout".into()));
    }
    let theta = c.f64s(n)?;
    let fisher = c.f64s(n)?;
    let theta_old = c.f64s(n)?;
    if c.pos != buf.len() {
        return Err(Error::Snapshot("trailing bytes after model snapshot".into()));
    }
    let params = ModelParams { dims, layout, theta, fisher, theta_old };
    params.check().map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}
