use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::RunConfig;
use super::{EvalArgs, GenMasksArgs, Mode, StylizeArgs, SynthArgs, TrainArgs};
use crate::coherence::{stability_error_sequence, FlowField, MaskMap};
use crate::error::{Error, Result};
use crate::groundtruth::{occlusion_mask, synth_clip, ClipSample, OcclusionParams, SynthConfig};
use crate::io::{
    load_bundle, read_clip, read_flo, read_image, read_mask, save_bundle, write_clip, write_flo, write_image,
    write_mask,
};
use crate::models::ModelBundle;
use crate::numeric::Tensor;
use crate::pipeline::{
    stylize_first_frame, stylize_next_frame_detailed, stylize_video_baseline, train, validate, LossReport,
};

fn out_io(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut v = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == ext) {
            v.push(p);
        }
    }
    v.sort();
    Ok(v)
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        height: a.size.0,
        width: a.size.1,
        frames: a.frames,
        objects: a.objects,
        noise_sigma: a.noise,
        brightness_jitter: a.brightness_jitter,
        ..SynthConfig::default()
    };
    let clip = synth_clip(&cfg, a.seed)?;
    let m = write_clip(&clip, &a.out)?;
    writeln!(
        out,
        "wrote {} frames, {} flows, {} masks to {}",
        m.frames.len(),
        m.flows.len(),
        m.masks.len(),
        a.out.display()
    )
    .map_err(out_io)
}

pub fn cmd_gen_masks(a: &GenMasksArgs, out: &mut dyn Write) -> Result<()> {
    let params = OcclusionParams {
        cross_check_coeff: a.cross_check_coeff,
        cross_check_bias: a.cross_check_bias,
        boundary_coeff: a.boundary_coeff,
        boundary_bias: a.boundary_bias,
    };
    params.validate()?;
    let fwd = read_flo(&a.fwd)?;
    let bwd = read_flo(&a.bwd)?;
    let mask = occlusion_mask(&fwd, &bwd, &params)?;
    write_mask(&mask, &a.out)?;
    let (h, w) = mask.dims();
    let kept = mask.mean();
    writeln!(
        out,
        "cross_check_coeff={} cross_check_bias={} boundary_coeff={} boundary_bias={}\n{}: {w}x{h}, {:.2}% traceable",
        params.cross_check_coeff,
        params.cross_check_bias,
        params.boundary_coeff,
        params.boundary_bias,
        a.out.display(),
        100.0 * kept
    )
    .map_err(out_io)
}

/// Contents of `summary.json` in a training output directory.
#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub training_clips: usize,
    pub training_pairs: usize,
    pub initial_total: f64,
    pub final_total: f64,
    pub final_coherence: f64,
    pub final_occlusion: f64,
    pub final_flow: f64,
    pub validation: Option<ValidationSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationSummary {
    pub clips: usize,
    pub coherent: f64,
    pub baseline: f64,
    pub reduction: f64,
    pub mean_mask: f64,
    pub initial_coherent: f64,
    pub initial_reduction: f64,
}

fn synth_set(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Vec<ClipSample>> {
    (0..n as u64).map(|i| synth_clip(cfg, seed + i)).collect()
}

/// Trains, writing `config.txt`, `history.txt`, `model.vsw`,
/// `summary.json` and optional `checkpoints/` into `--out`.
pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut clips = a.data.iter().map(|d| read_clip(d)).collect::<Result<Vec<_>>>()?;
    clips.extend(synth_set(&cfg.synth, cfg.data_clips, cfg.data_seed)?);
    let pairs: usize = clips.iter().map(ClipSample::pairs).sum();
    if pairs == 0 {
        return Err(Error::Config("no training data: pass --data directories or set data.clips".into()));
    }
    let val = synth_set(&cfg.synth, cfg.val_clips, cfg.val_seed)?;

    let bundle = match &cfg.model_init {
        Some(p) => load_bundle(p)?,
        None => ModelBundle::init(
            cfg.style.clone(),
            cfg.flow.clone(),
            cfg.mask.clone(),
            cfg.model_seed,
            crate::models::InitScheme::HeNormal,
        )?,
    };

    create_dir(&a.out)?;
    let mut echo = String::from("# effective configuration\n");
    for d in &a.data {
        echo.push_str(&format!("# --data {}\n", d.display()));
    }
    echo.push_str(&cfg.to_text());
    write_text(&a.out.join("config.txt"), &echo)?;

    let initial_val = if val.is_empty() { None } else { Some(validate(&bundle, &val)?) };
    let ckpt_dir = a.out.join("checkpoints");
    if cfg.train.checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    let hist_path = a.out.join("history.txt");
    let hist_file = std::fs::File::create(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    let mut hist = BufWriter::new(hist_file);
    writeln!(hist, "# iteration lr coherence occlusion flow total").map_err(|e| Error::io(&hist_path, e))?;

    let start = Instant::now();
    let log = |r: &LossReport| writeln!(hist, "{}", r.to_line()).map_err(|e| Error::io(&hist_path, e));
    let checkpoint = |step: usize, b: &ModelBundle| save_bundle(b, &ckpt_dir.join(format!("step_{step:06}.vsw")));
    let (trained, history) = train(bundle, &clips, &cfg.train, log, checkpoint)?;
    let elapsed = start.elapsed().as_secs_f64();
    hist.flush().map_err(|e| Error::io(&hist_path, e))?;
    save_bundle(&trained, &a.out.join("model.vsw"))?;

    let last = history.last().copied();
    let validation = match initial_val {
        None => None,
        Some(init) => {
            let r = validate(&trained, &val)?;
            Some(ValidationSummary {
                clips: val.len(),
                coherent: r.coherent,
                baseline: r.baseline,
                reduction: r.reduction(),
                mean_mask: r.mean_mask,
                initial_coherent: init.coherent,
                initial_reduction: init.reduction(),
            })
        }
    };
    let summary = TrainSummary {
        iterations: history.len(),
        training_clips: clips.len(),
        training_pairs: pairs,
        initial_total: history.first().map_or(f64::NAN, |r| r.total),
        final_total: last.map_or(f64::NAN, |r| r.total),
        final_coherence: last.map_or(f64::NAN, |r| r.parts.coherence),
        final_occlusion: last.map_or(f64::NAN, |r| r.parts.occlusion),
        final_flow: last.map_or(f64::NAN, |r| r.parts.flow),
        validation,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Contract(e.to_string()))?;
    write_text(&a.out.join("summary.json"), &(json + "\n"))?;

    let rate = if elapsed > 0.0 { history.len() as f64 / elapsed } else { 0.0 };
    writeln!(
        out,
        "trained {} iterations on {} pairs in {elapsed:.1} s ({rate:.1} it/s)",
        history.len(),
        pairs
    )
    .map_err(out_io)?;
    if let Some(v) = &summary.validation {
        writeln!(
            out,
            "validation: coherent {:.4e} baseline {:.4e} reduction {:.1}% mean mask {:.3}",
            v.coherent,
            v.baseline,
            100.0 * v.reduction,
            v.mean_mask
        )
        .map_err(out_io)?;
    }
    Ok(summary)
}

pub fn cmd_stylize(a: &StylizeArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(&a.model)?;
    let paths = files_with_ext(&a.frames, "ppm")?;
    if paths.is_empty() {
        return Err(Error::Config(format!("{}: no .ppm frames", a.frames.display())));
    }
    let frames = paths.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
    create_dir(&a.out)?;
    let names: Vec<_> = paths.iter().map(|p| p.file_name().expect("file path").to_owned()).collect();
    let debug_dir = a.out.join("debug");
    if a.debug && a.mode == Mode::Coherent {
        create_dir(&debug_dir)?;
    }
    match a.mode {
        Mode::Baseline => {
            for (img, name) in stylize_video_baseline(&bundle, &frames)?.iter().zip(&names) {
                write_image(img, &a.out.join(name))?;
            }
        }
        Mode::Coherent => {
            let (first, mut state) = stylize_first_frame(&bundle, &frames[0])?;
            write_image(&first, &a.out.join(&names[0]))?;
            for (i, f) in frames.iter().enumerate().skip(1) {
                let (o, next) = stylize_next_frame_detailed(&bundle, &state, f, None)?;
                write_image(&o.image, &a.out.join(&names[i]))?;
                if a.debug {
                    write_flo(&o.flow, &debug_dir.join(format!("flow_{i:04}.flo")))?;
                    write_mask(&o.mask, &debug_dir.join(format!("mask_{i:04}.pgm")))?;
                }
                state = next;
            }
        }
    }
    let mode = match a.mode {
        Mode::Coherent => "coherent",
        Mode::Baseline => "baseline",
    };
    let echo = format!(
        "model={}\nframes={}\nmode={mode}\ndebug={}\ncount={}\n",
        a.model.display(),
        a.frames.display(),
        a.debug,
        frames.len()
    );
    write_text(&a.out.join("stylize.txt"), &echo)?;
    writeln!(out, "stylized {} frames ({mode}) into {}", frames.len(), a.out.display()).map_err(out_io)
}

/// Per-pair stability errors of one or two arms.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub a: Vec<f64>,
    pub a_mean: f64,
    pub b: Option<(Vec<f64>, f64)>,
}

fn load_frames(dir: &Path) -> Result<Vec<Tensor>> {
    files_with_ext(dir, "ppm")?.iter().map(|p| read_image(p)).collect()
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport> {
    let flows: Vec<FlowField> = files_with_ext(&a.flows, "flo")?.iter().map(|p| read_flo(p)).collect::<Result<_>>()?;
    let masks: Vec<MaskMap> = files_with_ext(&a.masks, "pgm")?.iter().map(|p| read_mask(p)).collect::<Result<_>>()?;
    let fa = load_frames(&a.a)?;
    let ra = stability_error_sequence(&fa, &flows, &masks)?;
    let rb = match &a.b {
        Some(dir) => Some(stability_error_sequence(&load_frames(dir)?, &flows, &masks)?),
        None => None,
    };
    let mut text = String::from(if rb.is_some() { "# pair a b\n" } else { "# pair a\n" });
    for (i, e) in ra.per_pair.iter().enumerate() {
        text.push_str(&format!("{} {e:e}", i + 1));
        if let Some(b) = &rb {
            text.push_str(&format!(" {:e}", b.per_pair[i]));
        }
        text.push('\n');
    }
    text.push_str(&format!("mean {:e}", ra.mean));
    if let Some(b) = &rb {
        text.push_str(&format!(" {:e}\nreduction {:e}", b.mean, 1.0 - ra.mean / b.mean));
    }
    text.push('\n');
    out.write_all(text.as_bytes()).map_err(out_io)?;
    Ok(EvalReport {
        a: ra.per_pair,
        a_mean: ra.mean,
        b: rb.map(|r| (r.per_pair, r.mean)),
    })
}
