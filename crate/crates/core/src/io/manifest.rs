use std::path::{Path, PathBuf};

use super::flo::{read_flo, write_flo};
use super::image::{read_image, read_mask, write_image, write_mask};
use super::kv::{KeyValues, List};
use crate::error::{Error, Result};
use crate::groundtruth::{ClipSample, OcclusionParams, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";
const MANIFEST_VERSION: u32 = 1;

/// Writes every generator parameter under `prefix`.
pub fn put_synth_config(kv: &mut KeyValues, prefix: &str, c: &SynthConfig) {
    let k = |s: &str| format!("{prefix}{s}");
    kv.set(&k("height"), c.height);
    kv.set(&k("width"), c.width);
    kv.set(&k("frames"), c.frames);
    kv.set(&k("objects"), c.objects);
    kv.set(&k("camera_speed"), c.camera_speed);
    kv.set(&k("object_speed"), c.object_speed);
    kv.set(&k("motion"), c.motion);
    kv.set(&k("integer_motion"), c.integer_motion);
    kv.set(&k("brightness_jitter"), c.brightness_jitter);
    kv.set(&k("noise_sigma"), c.noise_sigma);
    kv.set(&k("mask_motion_boundaries"), c.mask_motion_boundaries);
    match c.camera_velocity {
        Some([dx, dy]) => kv.set(&k("camera_velocity"), format!("{dx},{dy}")),
        None => kv.set(&k("camera_velocity"), "random"),
    }
    put_occlusion(kv, prefix, &c.occlusion);
}

pub fn put_occlusion(kv: &mut KeyValues, prefix: &str, o: &OcclusionParams) {
    kv.set(&format!("{prefix}occlusion.cross_check_coeff"), o.cross_check_coeff);
    kv.set(&format!("{prefix}occlusion.cross_check_bias"), o.cross_check_bias);
    kv.set(&format!("{prefix}occlusion.boundary_coeff"), o.boundary_coeff);
    kv.set(&format!("{prefix}occlusion.boundary_bias"), o.boundary_bias);
}

pub fn take_occlusion(kv: &mut KeyValues, prefix: &str, d: OcclusionParams) -> Result<OcclusionParams> {
    let o = OcclusionParams {
        cross_check_coeff: kv.take_or(&format!("{prefix}occlusion.cross_check_coeff"), d.cross_check_coeff)?,
        cross_check_bias: kv.take_or(&format!("{prefix}occlusion.cross_check_bias"), d.cross_check_bias)?,
        boundary_coeff: kv.take_or(&format!("{prefix}occlusion.boundary_coeff"), d.boundary_coeff)?,
        boundary_bias: kv.take_or(&format!("{prefix}occlusion.boundary_bias"), d.boundary_bias)?,
    };
    o.validate()?;
    Ok(o)
}

/// Reads generator keys under `prefix`; absent keys keep the values of `d`.
pub fn take_synth_config(kv: &mut KeyValues, prefix: &str, d: SynthConfig) -> Result<SynthConfig> {
    let k = |s: &str| format!("{prefix}{s}");
    let camera_velocity = match kv.take_str(&k("camera_velocity")).as_deref() {
        None => d.camera_velocity,
        Some("random") => None,
        Some(s) => {
            let List(v) = s
                .parse::<List<f64>>()
                .map_err(|e| Error::Config(format!("{}: {e}", k("camera_velocity"))))?;
            match v[..] {
                [dx, dy] => Some([dx, dy]),
                _ => return Err(Error::Config(format!("{}: expected dx,dy or random", k("camera_velocity")))),
            }
        }
    };
    let c = SynthConfig {
        height: kv.take_or(&k("height"), d.height)?,
        width: kv.take_or(&k("width"), d.width)?,
        frames: kv.take_or(&k("frames"), d.frames)?,
        objects: kv.take_or(&k("objects"), d.objects)?,
        camera_speed: kv.take_or(&k("camera_speed"), d.camera_speed)?,
        object_speed: kv.take_or(&k("object_speed"), d.object_speed)?,
        motion: kv.take_or(&k("motion"), d.motion)?,
        integer_motion: kv.take_or(&k("integer_motion"), d.integer_motion)?,
        brightness_jitter: kv.take_or(&k("brightness_jitter"), d.brightness_jitter)?,
        noise_sigma: kv.take_or(&k("noise_sigma"), d.noise_sigma)?,
        mask_motion_boundaries: kv.take_or(&k("mask_motion_boundaries"), d.mask_motion_boundaries)?,
        occlusion: take_occlusion(kv, prefix, d.occlusion)?,
        camera_velocity,
    };
    c.validate()?;
    Ok(c)
}

/// Description of a clip directory: generator parameters plus relative
/// paths of the frames, backward flows and masks. Flow and mask `i` belong
/// to the pair (frame `i`, frame `i + 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClipManifest {
    pub config: SynthConfig,
    pub seed: u64,
    pub frames: Vec<PathBuf>,
    pub flows: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
}

impl ClipManifest {
    /// Standard file names for a clip of `config.frames` frames.
    pub fn standard(config: SynthConfig, seed: u64) -> Self {
        let n = config.frames;
        Self {
            frames: (0..n).map(|i| PathBuf::from(format!("frame_{i:04}.ppm"))).collect(),
            flows: (1..n).map(|i| PathBuf::from(format!("flow_{i:04}.flo"))).collect(),
            masks: (1..n).map(|i| PathBuf::from(format!("mask_{i:04}.pgm"))).collect(),
            config,
            seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::new();
        kv.set("version", MANIFEST_VERSION);
        kv.set("seed", self.seed);
        put_synth_config(&mut kv, "", &self.config);
        for (i, p) in self.frames.iter().enumerate() {
            kv.set(&format!("frame.{i}"), p.display());
        }
        for (i, p) in self.flows.iter().enumerate() {
            kv.set(&format!("flow.{}", i + 1), p.display());
        }
        for (i, p) in self.masks.iter().enumerate() {
            kv.set(&format!("mask.{}", i + 1), p.display());
        }
        format!("# synthetic clip manifest\n{}", kv.to_text())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, path)?;
        let version: u32 = kv.require("version")?;
        if version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MANIFEST_VERSION,
            });
        }
        let seed = kv.require("seed")?;
        let config = take_synth_config(&mut kv, "", SynthConfig::default())?;
        let n = config.frames;
        let mut list = |kind: &str, range: std::ops::Range<usize>| -> Result<Vec<PathBuf>> {
            range
                .map(|i| {
                    let p: PathBuf = kv.require(&format!("{kind}.{i}"))?;
                    if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                        return Err(Error::Config(format!("{}: {kind}.{i} must be a path inside the clip directory", path.display())));
                    }
                    Ok(p)
                })
                .collect()
        };
        let frames = list("frame", 0..n)?;
        let flows = list("flow", 1..n)?;
        let masks = list("mask", 1..n)?;
        kv.finish()?;
        Ok(Self {
            config,
            seed,
            frames,
            flows,
            masks,
        })
    }
}

/// Writes frames (PPM), backward flows (.flo), masks (PGM) and the manifest
/// into `dir`, which is created if needed.
pub fn write_clip(clip: &ClipSample, dir: &Path) -> Result<ClipManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = ClipManifest::standard(clip.config.clone(), clip.seed);
    for (f, p) in clip.frames.iter().zip(&m.frames) {
        write_image(f, &dir.join(p))?;
    }
    for (f, p) in clip.gt_flows.iter().zip(&m.flows) {
        write_flo(f, &dir.join(p))?;
    }
    for (f, p) in clip.gt_masks.iter().zip(&m.masks) {
        write_mask(f, &dir.join(p))?;
    }
    let mp = dir.join(MANIFEST_FILE);
    std::fs::write(&mp, m.to_text()).map_err(|e| Error::io(&mp, e))?;
    Ok(m)
}

/// Loads a clip directory written by [`write_clip`]. Frames come back
/// 8-bit quantized; forward flows are not stored and stay empty.
pub fn read_clip(dir: &Path) -> Result<ClipSample> {
    let mp = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let m = ClipManifest::parse(&text, &mp)?;
    let (h, w) = (m.config.height, m.config.width);
    let frames = m
        .frames
        .iter()
        .map(|p| {
            let path = dir.join(p);
            let t = read_image(&path)?;
            if t.shape() != [1, 3, h, w] {
                return Err(Error::parse(&path, 0, format!("frame shape {:?}, manifest says 1x3x{h}x{w}", t.shape())));
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_flows = m
        .flows
        .iter()
        .map(|p| {
            let path = dir.join(p);
            let f = read_flo(&path)?;
            if f.tensor().shape() != [1, 2, h, w] {
                return Err(Error::parse(&path, 4, format!("flow shape {:?}, manifest says {h}x{w}", f.tensor().shape())));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_masks = m
        .masks
        .iter()
        .map(|p| {
            let path = dir.join(p);
            let k = read_mask(&path)?;
            if k.tensor().shape() != [1, 1, h, w] {
                return Err(Error::parse(&path, 0, format!("mask shape {:?}, manifest says {h}x{w}", k.tensor().shape())));
            }
            Ok(k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClipSample {
        frames,
        gt_flows,
        gt_masks,
        forward_flows: Vec::new(),
        config: m.config,
        seed: m.seed,
    })
}
