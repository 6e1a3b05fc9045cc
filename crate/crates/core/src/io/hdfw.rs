//! `.hdfw` weight bundles.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "HDFW" | version u32 | config digest [u8; 32] | n_tensors u32
//! n_tensors x { name_len u32 | name utf-8 | dtype u8 (0 = f32) | ndim u32 | dims u64 x ndim | offset u64 }
//! payload: f32 values, offsets relative to the payload start
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, WeightBundle, FORMAT_VERSION};

pub const MAGIC: &[u8; 4] = b"HDFW";
const DTYPE_F32: u8 = 0;

/// Serializes a bundle. Tensors are written in name order, payload packed.
pub fn write_bundle(bundle: &WeightBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&bundle.version.to_le_bytes());
    out.extend_from_slice(&bundle.digest);
    out.extend_from_slice(&(bundle.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in bundle.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.data.len() as u64;
    }
    for (_, t) in bundle.iter() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
}

/// Parses a bundle without checking it against a config.
pub fn read_bundle(buf: &[u8]) -> Result<WeightBundle> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic (expected HDFW)".into()));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let digest: [u8; 32] = c.take(32, "digest")?.try_into().unwrap();
    let n = c.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?
            .to_string();
        let dtype = c.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("`{name}`: unsupported dtype {dtype}")));
        }
        let ndim = c.u32("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(16));
        let mut numel = 1u64;
        for _ in 0..ndim {
            let d = c.u64("dims")?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Format(format!("`{name}`: shape overflows")))?;
            shape.push(d as usize);
        }
        let offset = c.u64("offset")?;
        let bytes = numel
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("`{name}`: shape overflows")))?;
        entries.push(Entry {
            name,
            shape,
            offset,
            bytes,
        });
    }
    let payload = &buf[c.pos..];

    let mut order: Vec<&Entry> = entries.iter().collect();
    order.sort_by_key(|e| e.offset);
    let mut end = 0u64;
    for e in &order {
        if e.offset < end {
            return Err(Error::Format(format!("`{}` overlaps the previous tensor", e.name)));
        }
        end = e.offset + e.bytes;
        if end > payload.len() as u64 {
            return Err(Error::Format(format!("`{}` extends past the payload", e.name)));
        }
    }

    let mut bundle = WeightBundle::new(digest);
    bundle.version = version;
    for e in entries {
        if bundle.get(&e.name).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{}`", e.name)));
        }
        let raw = &payload[e.offset as usize..(e.offset + e.bytes) as usize];
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        bundle.insert(e.name, e.shape, data)?;
    }
    Ok(bundle)
}

pub fn save_weights(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_bundle(bundle)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a bundle and validates it against `cfg`.
pub fn load_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<WeightBundle> {
    let bundle = read_bundle_file(path)?;
    bundle.validate(cfg)?;
    Ok(bundle)
}

/// Reads a bundle without validation.
pub fn read_bundle_file(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_bundle(&buf)
}
