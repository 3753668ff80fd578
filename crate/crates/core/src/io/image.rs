use std::path::Path;

use crate::coherence::MaskMap;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Maps `[0, 1]` to a byte, rounding half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round() as u8
}

/// Binary PGM (1 channel) or PPM (3 channels) for a `1×C×H×W` tensor in `[0, 1]`.
pub fn encode_pnm(image: &Tensor) -> Result<Vec<u8>> {
    let (b, c, h, w) = image.dims4()?;
    if b != 1 || !(c == 1 || c == 3) {
        return Err(Error::shape("write_image", format!("expected 1x1xHxW or 1x3xHxW, got {:?}", image.shape())));
    }
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("write_image: value {v} outside [0, 1]")));
    }
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    let plane = h * w;
    out.reserve(c * plane);
    for i in 0..plane {
        for ch in 0..c {
            out.push(quantize(d[ch * plane + i]));
        }
    }
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::parse(path, start as u64, format!("expected positive {what}")))
    }
}

/// Parses binary PGM/PPM with maxval up to 255 into `1×C×H×W`.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let c = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::parse(path, 0, "expected binary PGM (P5) or PPM (P6)")),
    };
    let mut hd = Header { bytes, pos: 2 };
    let w = hd.number(path, "width")?;
    let h = hd.number(path, "height")?;
    let maxval_at = hd.pos;
    let maxval = hd.number(path, "maxval")?;
    if maxval > 255 {
        return Err(Error::parse(path, maxval_at as u64, format!("maxval {maxval} above 255 (16-bit unsupported)")));
    }
    match bytes.get(hd.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => hd.pos += 1,
        _ => return Err(Error::parse(path, hd.pos as u64, "missing whitespace after maxval")),
    }
    let need = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(c))
        .ok_or_else(|| Error::parse(path, 2, "image dimensions overflow"))?;
    let payload = &bytes[hd.pos..];
    if payload.len() < need {
        return Err(Error::parse(
            path,
            bytes.len() as u64,
            format!("truncated payload: {w}x{h}x{c} needs {need} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(Error::parse(path, (hd.pos + need) as u64, "trailing bytes after payload"));
    }
    let plane = h * w;
    let mut data = vec![0.0; c * plane];
    for i in 0..plane {
        for ch in 0..c {
            let v = payload[i * c + ch] as usize;
            if v > maxval {
                return Err(Error::parse(path, (hd.pos + i * c + ch) as u64, format!("sample {v} above maxval {maxval}")));
            }
            data[ch * plane + i] = v as f64 / maxval as f64;
        }
    }
    Tensor::new(vec![1, c, h, w], data)
}

pub fn write_image(image: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pnm(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

/// Masks are stored as PGM; binary masks map to {0, 255}.
pub fn write_mask(mask: &MaskMap, path: &Path) -> Result<()> {
    write_image(mask.tensor(), path)
}

pub fn read_mask(path: &Path) -> Result<MaskMap> {
    let t = read_image(path)?;
    if t.shape()[1] != 1 {
        return Err(Error::parse(path, 0, "mask must be a single-channel PGM"));
    }
    MaskMap::new(t)
}
