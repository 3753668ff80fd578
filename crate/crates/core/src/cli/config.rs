use std::path::{Path, PathBuf};

use crate::coherence::LossWeights;
use crate::error::{Error, Result};
use crate::groundtruth::SynthConfig;
use crate::io::{put_specs, put_synth_config, take_specs, take_synth_config, KeyValues};
use crate::models::{FlowNetSpec, MaskNetSpec, StyleNetSpec};
use crate::pipeline::TrainConfig;

/// Everything a training run depends on, as one `key=value` file.
///
/// Key groups: `train.*` and `loss.*` (optimization), `style.*`, `flow.*`,
/// `mask.*` and `model.*` (architecture and initialization), `synth.*`
/// (generator used for `data.clips` extra clips and `val.clips`
/// validation clips). Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub style: StyleNetSpec,
    pub flow: FlowNetSpec,
    pub mask: MaskNetSpec,
    pub model_seed: u64,
    /// Existing archive to start from instead of a fresh initialization.
    pub model_init: Option<PathBuf>,
    pub synth: SynthConfig,
    pub data_clips: usize,
    pub data_seed: u64,
    pub val_clips: usize,
    pub val_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            style: StyleNetSpec::default(),
            flow: FlowNetSpec::default(),
            mask: MaskNetSpec::default(),
            model_seed: 0,
            model_init: None,
            synth: SynthConfig::default(),
            data_clips: 0,
            data_seed: 1000,
            val_clips: 0,
            val_seed: 9000,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, path)?;
        let d = Self::default();
        let t = d.train.clone();
        let (style, flow, mask) = take_specs(&mut kv)?;
        let train = TrainConfig {
            iterations: kv.take_or("train.iterations", t.iterations)?,
            batch: kv.take_or("train.batch", t.batch)?,
            lr: kv.take_or("train.lr", t.lr)?,
            lr_decay: kv.take_or("train.lr_decay", t.lr_decay)?,
            decay_every: kv.take_or("train.decay_every", t.decay_every)?,
            loss_weights: LossWeights {
                alpha: kv.take_or("loss.alpha", t.loss_weights.alpha)?,
                beta: kv.take_or("loss.beta", t.loss_weights.beta)?,
                lambda: kv.take_or("loss.lambda", t.loss_weights.lambda)?,
            },
            split_layer: style.split,
            seed: kv.take_or("train.seed", t.seed)?,
            freeze_flow: kv.take_or("train.freeze_flow", t.freeze_flow)?,
            checkpoint_every: kv.take_or("train.checkpoint_every", t.checkpoint_every)?,
        };
        let cfg = Self {
            train,
            style,
            flow,
            mask,
            model_seed: kv.take_or("model.seed", d.model_seed)?,
            model_init: kv.take("model.init")?,
            synth: take_synth_config(&mut kv, "synth.", d.synth)?,
            data_clips: kv.take_or("data.clips", d.data_clips)?,
            data_seed: kv.take_or("data.seed", d.data_seed)?,
            val_clips: kv.take_or("val.clips", d.val_clips)?,
            val_seed: kv.take_or("val.seed", d.val_seed)?,
        };
        kv.finish()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Every effective value, in a form [`parse`](Self::parse) reads back.
    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::new();
        let t = &self.train;
        kv.set("train.iterations", t.iterations);
        kv.set("train.batch", t.batch);
        kv.set("train.lr", t.lr);
        kv.set("train.lr_decay", t.lr_decay);
        kv.set("train.decay_every", t.decay_every);
        kv.set("train.seed", t.seed);
        kv.set("train.freeze_flow", t.freeze_flow);
        kv.set("train.checkpoint_every", t.checkpoint_every);
        kv.set("loss.alpha", t.loss_weights.alpha);
        kv.set("loss.beta", t.loss_weights.beta);
        kv.set("loss.lambda", t.loss_weights.lambda);
        put_specs(&mut kv, &self.style, &self.flow, &self.mask);
        kv.set("model.seed", self.model_seed);
        if let Some(p) = &self.model_init {
            kv.set("model.init", p.display());
        }
        put_synth_config(&mut kv, "synth.", &self.synth);
        kv.set("data.clips", self.data_clips);
        kv.set("data.seed", self.data_seed);
        kv.set("val.clips", self.val_clips);
        kv.set("val.seed", self.val_seed);
        kv.to_text()
    }
}
