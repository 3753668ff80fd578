use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{flow_gradient_magnitude, source_out_of_frame, OcclusionParams};
use crate::coherence::{FlowField, MaskMap};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// How objects and the camera move over a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionKind {
    Constant,
    Sinusoidal,
    /// Each clip picks constant or sinusoidal motion at random.
    Mixed,
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::Sinusoidal => "sinusoidal",
            Self::Mixed => "mixed",
        })
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "sinusoidal" => Ok(Self::Sinusoidal),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::Config(format!("unknown motion kind {s:?} (constant, sinusoidal, mixed)"))),
        }
    }
}

/// Generator parameters for one synthetic clip.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Maximum number of foreground objects; each clip draws 1..=objects.
    pub objects: usize,
    /// Largest per-axis camera velocity, pixels per frame.
    pub camera_speed: f64,
    /// Largest per-axis object velocity relative to the frame.
    pub object_speed: f64,
    pub motion: MotionKind,
    /// Round constant velocities to whole pixels so warps are exact.
    pub integer_motion: bool,
    /// Odd frames are scaled by `1 + brightness_jitter`.
    pub brightness_jitter: f64,
    pub noise_sigma: f64,
    /// Also zero pixels on motion boundaries of the exact flow.
    pub mask_motion_boundaries: bool,
    pub occlusion: OcclusionParams,
    /// Overrides the random camera velocity (constant motion).
    pub camera_velocity: Option<[f64; 2]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 48,
            width: 48,
            frames: 8,
            objects: 2,
            camera_speed: 2.0,
            object_speed: 3.0,
            motion: MotionKind::Mixed,
            integer_motion: false,
            brightness_jitter: 0.0,
            noise_sigma: 0.0,
            mask_motion_boundaries: true,
            occlusion: OcclusionParams::default(),
            camera_velocity: None,
        }
    }
}

/// Frame extents must be multiples of this so both the style encoder
/// (stride 4) and the flow network (stride 8) accept them.
pub const FRAME_MULTIPLE: usize = 8;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % FRAME_MULTIPLE != 0 || self.width % FRAME_MULTIPLE != 0 {
            return Err(Error::Config(format!(
                "frame size {}x{} must be a positive multiple of {FRAME_MULTIPLE}",
                self.height, self.width
            )));
        }
        if self.height.min(self.width) < 16 && self.objects > 0 {
            return Err(Error::Config("frames smaller than 16 px leave no room for objects".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config(format!("a clip needs at least 2 frames, got {}", self.frames)));
        }
        let nonneg = [
            ("camera_speed", self.camera_speed),
            ("object_speed", self.object_speed),
            ("brightness_jitter", self.brightness_jitter),
            ("noise_sigma", self.noise_sigma),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k} must be finite and >= 0, got {v}")));
            }
        }
        if self.brightness_jitter >= 1.0 {
            return Err(Error::Config("brightness_jitter must be below 1".into()));
        }
        self.occlusion.validate()
    }
}

/// A synthetic clip with exact supervision. `gt_flows[i]`, `gt_masks[i]`
/// relate `frames[i + 1]` (target) to `frames[i]` (source).
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub frames: Vec<Tensor>,
    pub gt_flows: Vec<FlowField>,
    pub gt_masks: Vec<MaskMap>,
    /// Forward flows (frame i to i + 1), kept for cross-check experiments.
    pub forward_flows: Vec<FlowField>,
    pub config: SynthConfig,
    pub seed: u64,
}

impl ClipSample {
    pub fn pairs(&self) -> usize {
        self.gt_flows.len()
    }
}

#[derive(Clone, Debug)]
struct Texture {
    base: [f64; 3],
    /// (kx, ky, phase, amplitude per channel)
    waves: Vec<(f64, f64, f64, [f64; 3])>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let base = [0.0; 3].map(|_: f64| rng.gen_range(0.3..0.7));
        let waves = (0..3)
            .map(|_| {
                let wavelength = rng.gen_range(12.0..32.0);
                let angle = rng.gen_range(0.0..TAU);
                let k = TAU / wavelength;
                let amp = [0.0; 3].map(|_: f64| rng.gen_range(-0.08..0.08));
                (k * angle.cos(), k * angle.sin(), rng.gen_range(0.0..TAU), amp)
            })
            .collect();
        Self { base, waves }
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let mut v = self.base;
        for (kx, ky, ph, amp) in &self.waves {
            let s = (kx * x + ky * y + ph).sin();
            for c in 0..3 {
                v[c] += amp[c] * s;
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug)]
enum Trajectory {
    Constant { v: [f64; 2] },
    Sinusoidal { amp: [f64; 2], period: f64, phase: f64 },
}

impl Trajectory {
    fn offset(&self, t: usize) -> [f64; 2] {
        match *self {
            Self::Constant { v } => [v[0] * t as f64, v[1] * t as f64],
            Self::Sinusoidal { amp, period, phase } => {
                let s = (TAU * t as f64 / period + phase).sin() - phase.sin();
                [amp[0] * s, amp[1] * s]
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect,
    Ellipse,
}

#[derive(Clone, Debug)]
struct Object {
    shape: Shape,
    center: [f64; 2],
    half: [f64; 2],
    texture: Texture,
    motion: Trajectory,
}

impl Object {
    fn center_at(&self, t: usize) -> [f64; 2] {
        let o = self.motion.offset(t);
        [self.center[0] + o[0], self.center[1] + o[1]]
    }

    fn contains(&self, t: usize, x: f64, y: f64) -> bool {
        let c = self.center_at(t);
        let dx = (x - c[0]) / self.half[0];
        let dy = (y - c[1]) / self.half[1];
        match self.shape {
            Shape::Rect => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            Shape::Ellipse => dx * dx + dy * dy <= 1.0,
        }
    }
}

struct Scene {
    background: Texture,
    /// Background content at frame pixel p is world point p + camera(t).
    camera: Trajectory,
    objects: Vec<Object>,
}

/// Surface id: 0 = background, i + 1 = object i (later objects on top).
impl Scene {
    fn surface(&self, t: usize, x: f64, y: f64) -> usize {
        self.objects
            .iter()
            .enumerate()
            .rev()
            .find(|(_, o)| o.contains(t, x, y))
            .map_or(0, |(i, _)| i + 1)
    }

    fn color(&self, t: usize, x: f64, y: f64) -> [f64; 3] {
        match self.surface(t, x, y) {
            0 => {
                let c = self.camera.offset(t);
                self.background.sample(x + c[0], y + c[1])
            }
            s => {
                let o = &self.objects[s - 1];
                let c = o.center_at(t);
                o.texture.sample(x - c[0], y - c[1])
            }
        }
    }

    /// Position change of `surface` from frame `a` to frame `b` as seen in
    /// the image (content at p in `b` came from p + result in `a`).
    fn source_offset(&self, surface: usize, a: usize, b: usize) -> [f64; 2] {
        if surface == 0 {
            let (ca, cb) = (self.camera.offset(a), self.camera.offset(b));
            [cb[0] - ca[0], cb[1] - ca[1]]
        } else {
            let o = &self.objects[surface - 1];
            let (ca, cb) = (o.center_at(a), o.center_at(b));
            [ca[0] - cb[0], ca[1] - cb[1]]
        }
    }
}

fn random_trajectory(rng: &mut ChaCha8Rng, speed: f64, kind: MotionKind, integer: bool) -> Trajectory {
    let kind = match kind {
        _ if integer => MotionKind::Constant,
        MotionKind::Mixed => {
            if rng.gen_bool(0.5) {
                MotionKind::Constant
            } else {
                MotionKind::Sinusoidal
            }
        }
        k => k,
    };
    let draw = |rng: &mut ChaCha8Rng| if speed > 0.0 { rng.gen_range(-speed..=speed) } else { 0.0 };
    match kind {
        MotionKind::Sinusoidal => {
            let period = rng.gen_range(6.0..16.0);
            // peak velocity of amp·sin(2πt/T) is amp·2π/T
            let scale = period / TAU;
            Trajectory::Sinusoidal {
                amp: [draw(rng) * scale, draw(rng) * scale],
                period,
                phase: rng.gen_range(0.0..TAU),
            }
        }
        _ => {
            let mut v = [draw(rng), draw(rng)];
            if integer {
                v = v.map(f64::round);
            }
            Trajectory::Constant { v }
        }
    }
}

fn build_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let background = Texture::random(rng);
    let camera = match cfg.camera_velocity {
        Some(v) => Trajectory::Constant { v },
        None => random_trajectory(rng, cfg.camera_speed, cfg.motion, cfg.integer_motion),
    };
    let count = if cfg.objects == 0 { 0 } else { rng.gen_range(1..=cfg.objects) };
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let min_side = h.min(w);
    let objects = (0..count)
        .map(|_| {
            let shape = if rng.gen_bool(0.5) { Shape::Rect } else { Shape::Ellipse };
            let half = [
                rng.gen_range(min_side / 10.0..min_side / 5.0),
                rng.gen_range(min_side / 10.0..min_side / 5.0),
            ];
            let center = [rng.gen_range(0.2 * w..0.8 * w), rng.gen_range(0.2 * h..0.8 * h)];
            let texture = Texture::random(rng);
            let motion = random_trajectory(rng, cfg.object_speed, cfg.motion, cfg.integer_motion);
            Object {
                shape,
                center,
                half,
                texture,
                motion,
            }
        })
        .collect();
    Scene {
        background,
        camera,
        objects,
    }
}

/// Renders a clip of textured objects over a textured, translating
/// background with exact backward flow and traceability masks.
///
/// The analytic mask is 0 where the source position leaves the frame or
/// shows a different surface in the previous frame (disocclusion), and,
/// when enabled, on motion boundaries of the exact flow.
pub fn synth_clip(cfg: &SynthConfig, seed: u64) -> Result<ClipSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = build_scene(cfg, &mut rng);
    let (h, w) = (cfg.height, cfg.width);
    let plane = h * w;

    let mut frames = Vec::with_capacity(cfg.frames);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    for t in 0..cfg.frames {
        let gain = if t % 2 == 1 { 1.0 + cfg.brightness_jitter } else { 1.0 };
        let mut d = vec![0.0; 3 * plane];
        for y in 0..h {
            for x in 0..w {
                let c = scene.color(t, x as f64, y as f64);
                for (ch, v) in c.iter().enumerate() {
                    d[ch * plane + y * w + x] = v * gain;
                }
            }
        }
        if cfg.noise_sigma > 0.0 {
            d.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        d.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        frames.push(Tensor::from_raw(vec![1, 3, h, w], d));
    }

    let mut gt_flows = Vec::with_capacity(cfg.frames - 1);
    let mut gt_masks = Vec::with_capacity(cfg.frames - 1);
    let mut forward_flows = Vec::with_capacity(cfg.frames - 1);
    for t in 1..cfg.frames {
        let mut bwd = vec![0.0; 2 * plane];
        let mut fwd = vec![0.0; 2 * plane];
        let mut mask = vec![1.0; plane];
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let i = y * w + x;
                let s = scene.surface(t, xf, yf);
                let b = scene.source_offset(s, t - 1, t);
                bwd[i] = b[0];
                bwd[plane + i] = b[1];
                let sp = scene.surface(t - 1, xf, yf);
                let f = scene.source_offset(sp, t, t - 1);
                fwd[i] = f[0];
                fwd[plane + i] = f[1];
                if source_out_of_frame(x, y, b[0], b[1], h, w) || scene.surface(t - 1, xf + b[0], yf + b[1]) != s {
                    mask[i] = 0.0;
                }
            }
        }
        let bwd = FlowField::new(Tensor::from_raw(vec![1, 2, h, w], bwd))?;
        if cfg.mask_motion_boundaries {
            let grad = flow_gradient_magnitude(&bwd);
            for (i, m) in mask.iter_mut().enumerate() {
                let (u, v) = (bwd.tensor().data()[i], bwd.tensor().data()[plane + i]);
                if cfg.occlusion.is_boundary(grad.data()[i], u * u + v * v) {
                    *m = 0.0;
                }
            }
        }
        gt_flows.push(bwd);
        forward_flows.push(FlowField::new(Tensor::from_raw(vec![1, 2, h, w], fwd))?);
        gt_masks.push(MaskMap::new(Tensor::from_raw(vec![1, 1, h, w], mask))?);
    }

    Ok(ClipSample {
        frames,
        gt_flows,
        gt_masks,
        forward_flows,
        config: cfg.clone(),
        seed,
    })
}
