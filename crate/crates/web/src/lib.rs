//! Browser demo. The plain-Rust [`Scene`] and [`stability`] do the work and
//! are tested natively; [`Demo`] is the thin wasm-bindgen surface the page
//! in `www/` talks to.

use vidstyle::coherence::{stability_error_sequence, warp_features, FlowField, MaskMap};
use vidstyle::groundtruth::{occlusion_mask, synth_clip, ClipSample, MotionKind, OcclusionParams, SynthConfig};
use vidstyle::io::decode_bundle;
use vidstyle::pipeline::{stylize_first_frame, stylize_next_frame_detailed, stylize_video_baseline, stylize_video_coherent, Oracle};
use vidstyle::{ModelBundle, Result, SplitLayer, Tensor};
use wasm_bindgen::prelude::*;

/// RGBA bytes of an image tensor `[1, c, h, w]` with c in {1, 3}.
pub fn to_rgba(t: &Tensor) -> Vec<u8> {
    let s = t.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    let d = t.data();
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = Vec::with_capacity(4 * h * w);
    for i in 0..h * w {
        for ch in 0..3 {
            out.push(byte(d[ch.min(c - 1) * h * w + i]));
        }
        out.push(255);
    }
    out
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match h6 as usize {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|x| (x * 255.0).round() as u8)
}

/// Color-wheel rendering: hue is direction, saturation is magnitude
/// relative to `max_mag` (the field's own maximum when `None`).
pub fn flow_rgba(flow: &FlowField, max_mag: Option<f64>) -> Vec<u8> {
    let t = flow.tensor();
    let (h, w) = (t.shape()[2], t.shape()[3]);
    let d = t.data();
    let mag = |i: usize| d[i].hypot(d[h * w + i]);
    let top = max_mag.unwrap_or_else(|| (0..h * w).map(mag).fold(0.0, f64::max)).max(1e-9);
    let mut out = Vec::with_capacity(4 * h * w);
    for i in 0..h * w {
        let angle = d[h * w + i].atan2(d[i]) / std::f64::consts::TAU;
        out.extend_from_slice(&hsv(angle, (mag(i) / top).min(1.0), 1.0));
        out.push(255);
    }
    out
}

/// Occluded (0) pixels red, kept (1) pixels white.
pub fn mask_rgba(mask: &MaskMap) -> Vec<u8> {
    mask.tensor()
        .data()
        .iter()
        .flat_map(|&m| if m > 0.5 { [255, 255, 255, 255] } else { [200, 40, 40, 255] })
        .collect()
}

/// Block-minimum downsampling: a coarse cell counts as visible only when
/// every pixel under it is.
pub fn downsample_mask(mask: &MaskMap, h: usize, w: usize) -> MaskMap {
    let t = mask.tensor();
    let (mh, mw) = (t.shape()[2], t.shape()[3]);
    let (sy, sx) = (mh / h, mw / w);
    let mut d = vec![1.0; h * w];
    for y in 0..mh {
        for x in 0..mw {
            let cell = &mut d[(y / sy).min(h - 1) * w + (x / sx).min(w - 1)];
            *cell = f64::min(*cell, t.data()[y * mw + x]);
        }
    }
    MaskMap::new(Tensor::new(vec![1, 1, h, w], d).expect("mask shape")).expect("binary mask")
}

pub struct WarpPreview {
    pub warped: Tensor,
    /// Mean squared error against the current frame over visible pixels.
    pub visible_error: f64,
    /// The same over all pixels.
    pub full_error: f64,
    pub error_rgba: Vec<u8>,
}

/// A synthetic clip together with the mask thresholds being explored.
pub struct Scene {
    pub clip: ClipSample,
    pub params: OcclusionParams,
}

impl Scene {
    pub fn generate(seed: u64, size: usize, objects: usize, motion: MotionKind) -> Result<Self> {
        let cfg = SynthConfig {
            height: size,
            width: size,
            objects,
            motion,
            ..SynthConfig::default()
        };
        Ok(Self {
            clip: synth_clip(&cfg, seed)?,
            params: OcclusionParams::default(),
        })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.clip.config.height, self.clip.config.width)
    }

    /// Mask of pair `t -> t+1` under the current thresholds.
    pub fn mask(&self, pair: usize) -> Result<MaskMap> {
        occlusion_mask(&self.clip.forward_flows[pair], &self.clip.gt_flows[pair], &self.params)
    }

    /// Pulls frame `pair` forward onto frame `pair + 1` with the exact
    /// backward flow and compares.
    pub fn warp_preview(&self, pair: usize) -> Result<WarpPreview> {
        let prev = &self.clip.frames[pair];
        let cur = &self.clip.frames[pair + 1];
        let warped = warp_features(prev, &self.clip.gt_flows[pair])?;
        let mask = self.mask(pair)?;
        let (c, h, w) = (cur.shape()[1], cur.shape()[2], cur.shape()[3]);
        let (wd, cd, md) = (warped.data(), cur.data(), mask.tensor().data());
        let (mut vis, mut vis_n, mut full) = (0.0, 0usize, 0.0);
        let mut error_rgba = Vec::with_capacity(4 * h * w);
        for i in 0..h * w {
            let e = (0..c).map(|ch| (wd[ch * h * w + i] - cd[ch * h * w + i]).powi(2)).sum::<f64>() / c as f64;
            full += e;
            if md[i] > 0.5 {
                vis += e;
                vis_n += 1;
            }
            let g = (255.0 * (4.0 * e.sqrt()).min(1.0)).round() as u8;
            error_rgba.extend_from_slice(&if md[i] > 0.5 { [g, g, g, 255] } else { [g.max(90), 0, 0, 255] });
        }
        Ok(WarpPreview {
            warped,
            visible_error: vis / vis_n.max(1) as f64,
            full_error: full / (h * w) as f64,
            error_rgba,
        })
    }
}

pub struct StabilityResult {
    pub baseline: Vec<Tensor>,
    pub coherent: Vec<Tensor>,
    pub baseline_error: f64,
    pub coherent_error: f64,
}

/// Stylizes the clip frame by frame and independently, scoring both with
/// the exact flows and masks. Without a trained `model` the coherent arm
/// propagates with the exact flow and mask instead of predicting them.
pub fn stability(clip: &ClipSample, model: Option<&ModelBundle>, split: SplitLayer, seed: u64) -> Result<StabilityResult> {
    let fresh;
    let bundle = match model {
        Some(b) => b,
        None => {
            fresh = ModelBundle::with_defaults(split, seed)?;
            &fresh
        }
    };
    let baseline = stylize_video_baseline(bundle, &clip.frames)?;
    let coherent = if model.is_some() {
        stylize_video_coherent(bundle, &clip.frames)?.0
    } else {
        let (first, mut state) = stylize_first_frame(bundle, &clip.frames[0])?;
        let (_, _, fh, fw) = state.prev_composite.dims4()?;
        let mut out = vec![first];
        for (t, frame) in clip.frames.iter().enumerate().skip(1) {
            let mask = downsample_mask(&clip.gt_masks[t - 1], fh, fw);
            let oracle = Oracle {
                flow: &clip.gt_flows[t - 1],
                mask: &mask,
            };
            let (o, next) = stylize_next_frame_detailed(bundle, &state, frame, Some(oracle))?;
            out.push(o.image);
            state = next;
        }
        out
    };
    let b = stability_error_sequence(&baseline, &clip.gt_flows, &clip.gt_masks)?;
    let c = stability_error_sequence(&coherent, &clip.gt_flows, &clip.gt_masks)?;
    Ok(StabilityResult {
        baseline,
        coherent,
        baseline_error: b.mean,
        coherent_error: c.mean,
    })
}

fn js(e: vidstyle::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Page-facing state: one synthetic clip, the slider thresholds and an
/// optional trained model loaded from an archive.
#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    model: Option<ModelBundle>,
    stability: Option<StabilityResult>,
}

#[wasm_bindgen]
impl Demo {
    /// `motion` is "constant", "sinusoidal" or "mixed"; `size` must be a
    /// multiple of 8.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32, objects: u32, motion: &str) -> std::result::Result<Demo, JsError> {
        let motion: MotionKind = motion.parse().map_err(js)?;
        Ok(Demo {
            scene: Scene::generate(seed as u64, size as usize, objects as usize, motion).map_err(js)?,
            model: None,
            stability: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.scene.size().1 as u32
    }

    pub fn height(&self) -> u32 {
        self.scene.size().0 as u32
    }

    pub fn frames(&self) -> u32 {
        self.scene.clip.frames.len() as u32
    }

    pub fn frame_rgba(&self, index: u32) -> Vec<u8> {
        to_rgba(&self.scene.clip.frames[index as usize])
    }

    /// Backward flow of pair `pair -> pair+1`, color coded.
    pub fn flow_rgba(&self, pair: u32) -> Vec<u8> {
        flow_rgba(&self.scene.clip.gt_flows[pair as usize], None)
    }

    pub fn set_thresholds(&mut self, cross_check_coeff: f64, cross_check_bias: f64, boundary_coeff: f64, boundary_bias: f64) -> std::result::Result<(), JsError> {
        let p = OcclusionParams {
            cross_check_coeff,
            cross_check_bias,
            boundary_coeff,
            boundary_bias,
        };
        p.validate().map_err(js)?;
        self.scene.params = p;
        Ok(())
    }

    pub fn mask_rgba(&self, pair: u32) -> std::result::Result<Vec<u8>, JsError> {
        Ok(mask_rgba(&self.scene.mask(pair as usize).map_err(js)?))
    }

    /// Fraction of pixels the current thresholds keep as visible.
    pub fn visible_fraction(&self, pair: u32) -> std::result::Result<f64, JsError> {
        Ok(self.scene.mask(pair as usize).map_err(js)?.tensor().mean())
    }

    /// Warped previous frame, then the error image, concatenated.
    pub fn warp_rgba(&self, pair: u32) -> std::result::Result<Vec<u8>, JsError> {
        let p = self.scene.warp_preview(pair as usize).map_err(js)?;
        let mut out = to_rgba(&p.warped);
        out.extend_from_slice(&p.error_rgba);
        Ok(out)
    }

    /// `[visible_error, full_error]` of the warp preview.
    pub fn warp_errors(&self, pair: u32) -> std::result::Result<Vec<f64>, JsError> {
        let p = self.scene.warp_preview(pair as usize).map_err(js)?;
        Ok(vec![p.visible_error, p.full_error])
    }

    /// Loads a trained archive; later stability runs use its predictions.
    pub fn load_model(&mut self, bytes: &[u8]) -> std::result::Result<String, JsError> {
        let b = decode_bundle(bytes, std::path::Path::new("upload")).map_err(js)?;
        let split = b.style_spec().split;
        self.model = Some(b);
        Ok(split.to_string())
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    /// Runs both arms over the clip; returns `[baseline, coherent]` mean
    /// stability errors. `split` is used only without a loaded model.
    pub fn run_stability(&mut self, split: &str, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
        let split: SplitLayer = split.parse().map_err(js)?;
        let r = stability(&self.scene.clip, self.model.as_ref(), split, seed as u64).map_err(js)?;
        let errs = vec![r.baseline_error, r.coherent_error];
        self.stability = Some(r);
        Ok(errs)
    }

    /// Stylized frame `index` of the last run; `coherent` picks the arm.
    pub fn stylized_rgba(&self, index: u32, coherent: bool) -> Vec<u8> {
        match &self.stability {
            Some(r) => to_rgba(&(if coherent { &r.coherent } else { &r.baseline })[index as usize]),
            None => Vec::new(),
        }
    }
}
