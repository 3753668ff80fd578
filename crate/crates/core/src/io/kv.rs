use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{FlowNetSpec, FlowStage, MaskNetSpec, SplitLayer, StyleNetSpec};

/// Ordered `key=value` text with `#` comments.
///
/// Reading is consuming: every lookup marks its key as used, and
/// [`finish`](Self::finish) rejects whatever was never looked up, so typos
/// in config files surface as errors instead of silently falling back to
/// defaults.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    path: PathBuf,
    entries: Vec<Entry>,
}

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    offset: u64,
    used: bool,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut kv = Self {
            path: path.clone(),
            entries: Vec::new(),
        };
        let mut offset = 0u64;
        for raw in text.split_inclusive('\n') {
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::parse(&path, offset, format!("expected key=value, got {line:?}")));
                };
                let key = k.trim();
                if key.is_empty() {
                    return Err(Error::parse(&path, offset, "empty key"));
                }
                if kv.entries.iter().any(|e| e.key == key) {
                    return Err(Error::parse(&path, offset, format!("duplicate key {key:?}")));
                }
                kv.entries.push(Entry {
                    key: key.to_string(),
                    value: v.trim().to_string(),
                    offset,
                    used: false,
                });
            }
            offset += raw.len() as u64;
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Appends or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value,
            None => self.entries.push(Entry {
                key: key.to_string(),
                value,
                offset: 0,
                used: false,
            }),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    /// Raw value of `key`, marking it used.
    pub fn take_str(&mut self, key: &str) -> Option<String> {
        let e = self.entries.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        Some(e.value.clone())
    }

    /// Parsed value of `key`, or `None` when absent.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let path = self.path.clone();
        let Some(e) = self.entries.iter_mut().find(|e| e.key == key) else {
            return Ok(None);
        };
        e.used = true;
        e.value
            .parse()
            .map(Some)
            .map_err(|err| Error::parse(path, e.offset, format!("{key}: {err}")))
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let end = self.entries.iter().map(|e| e.offset).max().unwrap_or(0);
        self.take(key)?
            .ok_or_else(|| Error::parse(&self.path, end, format!("missing key {key:?}")))
    }

    /// Errors on the first key that was never looked up.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => Err(Error::parse(&self.path, e.offset, format!("unknown key {:?}", e.key))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&e.key);
            s.push('=');
            s.push_str(&e.value);
            s.push('\n');
        }
        s
    }
}

/// Comma-separated list wrapper for `take`.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(List)
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn fixed<const N: usize>(key: &str, v: Option<List<usize>>, default: [usize; N]) -> Result<[usize; N]> {
    match v {
        None => Ok(default),
        Some(List(v)) => v
            .try_into()
            .map_err(|v: Vec<usize>| Error::Config(format!("{key}: expected {N} values, got {}", v.len()))),
    }
}

/// Writes all three network specs under `style.`, `flow.` and `mask.` keys.
pub fn put_specs(kv: &mut KeyValues, style: &StyleNetSpec, flow: &FlowNetSpec, mask: &MaskNetSpec) {
    kv.set("style.stem_width", style.stem_width);
    kv.set("style.widths", join(&style.widths));
    kv.set("style.res_blocks", style.res_blocks);
    kv.set("style.split", style.split);
    let stages: Vec<String> = flow.contract.iter().map(|s| format!("{}/{}", s.width, s.stride)).collect();
    kv.set("flow.contract", stages.join(","));
    kv.set("flow.expand_width", flow.expand_width);
    kv.set("flow.flow_scale", flow.flow_scale);
    kv.set("mask.widths", join(&mask.widths));
    kv.set("mask.kernel", mask.kernel);
}

/// Reads the keys written by [`put_specs`]; absent keys keep their defaults.
pub fn take_specs(kv: &mut KeyValues) -> Result<(StyleNetSpec, FlowNetSpec, MaskNetSpec)> {
    let sd = StyleNetSpec::default();
    let style = StyleNetSpec {
        stem_width: kv.take_or("style.stem_width", sd.stem_width)?,
        widths: fixed("style.widths", kv.take("style.widths")?, sd.widths)?,
        res_blocks: kv.take_or("style.res_blocks", sd.res_blocks)?,
        split: kv.take_or::<SplitLayer>("style.split", sd.split)?,
    };
    let fd = FlowNetSpec::default();
    let contract = match kv.take_str("flow.contract") {
        None => fd.contract.clone(),
        Some(s) => s
            .split(',')
            .map(|p| {
                let (w, st) = p
                    .trim()
                    .split_once('/')
                    .ok_or_else(|| Error::Config(format!("flow.contract: expected width/stride, got {p:?}")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("flow.contract: {v:?}: {e}")))
                };
                Ok(FlowStage {
                    width: parse(w)?,
                    stride: parse(st)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let flow = FlowNetSpec {
        contract,
        expand_width: kv.take_or("flow.expand_width", fd.expand_width)?,
        flow_scale: kv.take_or("flow.flow_scale", fd.flow_scale)?,
    };
    let md = MaskNetSpec::default();
    let mask = MaskNetSpec {
        widths: fixed("mask.widths", kv.take("mask.widths")?, md.widths)?,
        kernel: kv.take_or("mask.kernel", md.kernel)?,
    };
    style.validate()?;
    flow.validate()?;
    mask.validate()?;
    Ok((style, flow, mask))
}
