//! Weight archive layout (all integers little-endian):
//!
//! ```text
//! "VSWA"  u32 version  "LE\0\0"
//! u32 header length, header text (key=value: network specs, freeze flags)
//! u32 section count
//! per section: u8 component, u32 layer index, u16 name length, name,
//!              u8 rank, rank x u32 dims, f32 payload
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use super::kv::{put_specs, take_specs, KeyValues};
use crate::error::{Error, Result};
use crate::models::{Component, FreezeFlags, ModelBundle, Params};
use crate::numeric::Tensor;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"VSWA";
pub const ARCHIVE_VERSION: u32 = 1;
const ENDIAN_TAG: &[u8; 4] = b"LE\0\0";
const COMPONENTS: [Component; 3] = [Component::Style, Component::Flow, Component::Mask];

/// Serializes a bundle. Every parameter must be exactly representable as
/// f32 so that loading reproduces it bit for bit.
pub fn encode_bundle(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let mut kv = KeyValues::new();
    put_specs(&mut kv, bundle.style_spec(), bundle.flow_spec(), bundle.mask_spec());
    for c in COMPONENTS {
        kv.set(&format!("freeze.{c}"), bundle.freeze.get(c));
    }
    let header = kv.to_text();

    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(ENDIAN_TAG);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    let count: usize = COMPONENTS.iter().map(|&c| bundle.params(c).len()).sum();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (ci, &c) in COMPONENTS.iter().enumerate() {
        let p = bundle.params(c);
        for (i, (name, t)) in p.names.iter().zip(&p.tensors).enumerate() {
            out.push(ci as u8);
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                let f = v as f32;
                if f as f64 != v {
                    return Err(Error::Contract(format!("{c}/{name}: value {v} is not representable as f32")));
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(self.path, self.pos as u64, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.path, at as u64, msg)
    }
}

/// Parses archive bytes; `path` only labels errors.
pub fn decode_bundle(bytes: &[u8], path: &Path) -> Result<ModelBundle> {
    if bytes.len() < 4 || &bytes[..4] != ARCHIVE_MAGIC {
        return Err(Error::parse(path, 0, "bad magic (expected \"VSWA\")"));
    }
    if bytes.len() < 16 {
        return Err(Error::parse(path, bytes.len() as u64, "truncated header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != ARCHIVE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: ARCHIVE_VERSION,
        });
    }
    if &bytes[8..12] != ENDIAN_TAG {
        return Err(Error::parse(path, 8, "unsupported endianness tag"));
    }
    if bytes.len() < 20 {
        return Err(Error::parse(path, bytes.len() as u64, "truncated archive"));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut cur = Cursor { bytes: body, pos: 12, path };
    let hlen = cur.u32("header length")? as usize;
    let hstart = cur.pos;
    let text = std::str::from_utf8(cur.take(hlen, "header text")?).map_err(|_| cur.err(hstart, "header is not UTF-8"))?;
    let mut kv = KeyValues::parse(text, path)?;
    let (style_spec, flow_spec, mask_spec) = take_specs(&mut kv)?;
    let mut freeze = FreezeFlags::default();
    freeze.style = kv.require("freeze.style")?;
    freeze.flow = kv.require("freeze.flow")?;
    freeze.mask = kv.require("freeze.mask")?;
    kv.finish()?;

    let count = cur.u32("section count")? as usize;
    let mut params: [Params; 3] = Default::default();
    for _ in 0..count {
        let at = cur.pos;
        let ci = cur.u8("component")? as usize;
        if ci >= 3 {
            return Err(cur.err(at, format!("unknown component id {ci}")));
        }
        let index = cur.u32("layer index")? as usize;
        if index != params[ci].len() {
            return Err(cur.err(at + 1, format!("layer index {index} out of order (expected {})", params[ci].len())));
        }
        let nlen = cur.u16("name length")? as usize;
        let name_at = cur.pos;
        let name = std::str::from_utf8(cur.take(nlen, "name")?)
            .map_err(|_| cur.err(name_at, "layer name is not UTF-8"))?
            .to_string();
        let rank = cur.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| cur.err(at, "shape overflows"))?;
        let data_at = cur.pos;
        let raw = cur.take(n, "payload")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| cur.err(data_at, format!("{name}: {e}")))?;
        params[ci].names.push(name);
        params[ci].tensors.push(t);
    }
    if cur.pos != body.len() {
        return Err(cur.err(cur.pos, "trailing bytes before checksum"));
    }
    let [style, flow, mask] = params;
    ModelBundle::from_parts(style_spec, flow_spec, mask_spec, style, flow, mask, freeze)
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let bytes = encode_bundle(bundle)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes, path)
}
