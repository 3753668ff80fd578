use std::path::Path;

use crate::coherence::FlowField;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";
const HEADER: usize = 12;

/// Serializes a single-item flow field as Middlebury `.flo`.
///
/// Components are stored as 32-bit floats; values that are not exactly
/// representable in f32 are rounded.
pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let (h, w) = flow.dims();
    let b = flow.tensor().shape()[0];
    if b != 1 {
        return Err(Error::shape("write_flo", format!("expected one flow field, got batch {b}")));
    }
    if w > i32::MAX as usize || h > i32::MAX as usize {
        return Err(Error::Contract(format!("flow {w}x{h} too large for .flo")));
    }
    let t = flow.tensor().data();
    let mut out = Vec::with_capacity(HEADER + 8 * h * w);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    let plane = h * w;
    for i in 0..plane {
        out.extend_from_slice(&(t[i] as f32).to_le_bytes());
        out.extend_from_slice(&(t[plane + i] as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses `.flo` bytes; `path` only labels errors.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 4 || &bytes[..4] != FLO_MAGIC {
        return Err(Error::parse(path, 0, "bad magic (expected \"PIEH\")"));
    }
    if bytes.len() < HEADER {
        return Err(Error::parse(path, bytes.len() as u64, "truncated header"));
    }
    let int = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (w, h) = (int(4), int(8));
    if w <= 0 {
        return Err(Error::parse(path, 4, format!("width {w} must be positive")));
    }
    if h <= 0 {
        return Err(Error::parse(path, 8, format!("height {h} must be positive")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = (w as u64) * (h as u64) * 8 + HEADER as u64;
    if (bytes.len() as u64) < need {
        return Err(Error::parse(
            path,
            bytes.len() as u64,
            format!("truncated payload: {w}x{h} needs {need} bytes, file has {}", bytes.len()),
        ));
    }
    if (bytes.len() as u64) > need {
        return Err(Error::parse(path, need, "trailing bytes after payload"));
    }
    let plane = h * w;
    let mut data = vec![0.0; 2 * plane];
    for i in 0..plane {
        for c in 0..2 {
            let o = HEADER + 8 * i + 4 * c;
            let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::parse(path, o as u64, format!("non-finite flow component {v}")));
            }
            data[c * plane + i] = v as f64;
        }
    }
    FlowField::new(Tensor::new(vec![1, 2, h, w], data)?)
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    let bytes = encode_flo(flow)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}
