use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::{Adam, AdamConfig, StepDecay};
use crate::coherence::{
    compose_features_var, feature_delta_var, loss_coherence_var, loss_flow_var, loss_occlusion_var, loss_total,
    resize_flow, resize_flow_var, warp_features_var, FlowField, LossParts, LossWeights, MaskMap,
};
use crate::error::{Error, Result};
use crate::groundtruth::ClipSample;
use crate::models::{Component, ModelBundle, SplitLayer};
use crate::numeric::{Graph, Tensor};

/// Optimization schedule and loss balance for coherence training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Frame pairs per step.
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub loss_weights: LossWeights,
    pub split_layer: SplitLayer,
    pub seed: u64,
    /// Keep the flow network at its initial weights.
    pub freeze_flow: bool,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch: 1,
            lr: 1e-4,
            lr_decay: 0.8,
            decay_every: 500,
            loss_weights: LossWeights::default(),
            split_layer: SplitLayer::R1_4E,
            seed: 0,
            freeze_flow: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch and decay_every must be >= 1".into()));
        }
        self.loss_weights.validate()
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            base: self.lr,
            decay: self.lr_decay,
            every: self.decay_every,
        }
    }
}

/// One supervised frame pair (or a batch of them stacked on axis 0).
/// Flow and mask are at image resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub prev: Tensor,
    pub cur: Tensor,
    pub gt_flow: FlowField,
    pub gt_mask: MaskMap,
}

impl TrainingPair {
    pub fn from_clip(clip: &ClipSample, i: usize) -> Result<Self> {
        if i >= clip.pairs() {
            return Err(Error::Contract(format!("pair {i} out of range for a clip with {} pairs", clip.pairs())));
        }
        Ok(Self {
            prev: clip.frames[i].clone(),
            cur: clip.frames[i + 1].clone(),
            gt_flow: clip.gt_flows[i].clone(),
            gt_mask: clip.gt_masks[i].clone(),
        })
    }

    pub fn stack(pairs: &[TrainingPair]) -> Result<Self> {
        let col = |f: fn(&TrainingPair) -> &Tensor| pairs.iter().map(f).cloned().collect::<Vec<_>>();
        Ok(Self {
            prev: Tensor::stack_batch(&col(|p| &p.prev))?,
            cur: Tensor::stack_batch(&col(|p| &p.cur))?,
            gt_flow: FlowField::new(Tensor::stack_batch(&col(|p| p.gt_flow.tensor()))?)?,
            gt_mask: MaskMap::new(Tensor::stack_batch(&col(|p| p.gt_mask.tensor()))?)?,
        })
    }
}

/// Loss terms of one step, the weighted total and the learning rate used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub iteration: usize,
    pub lr: f64,
    pub parts: LossParts,
    pub total: f64,
}

impl LossReport {
    /// `iteration lr coherence occlusion flow total`, space separated.
    pub fn to_line(&self) -> String {
        format!(
            "{} {:e} {:e} {:e} {:e} {:e}",
            self.iteration, self.lr, self.parts.coherence, self.parts.occlusion, self.parts.flow, self.total
        )
    }
}

/// Forward pass of the two-frame training scheme. Both frames are encoded
/// fresh; the style network contributes no trainable leaves.
fn forward_losses(g: &mut Graph, bundle: &ModelBundle, pair: &TrainingPair, trainable: &[Component]) -> Result<(Vec<crate::numeric::Var>, [crate::numeric::Var; 3])> {
    let b = bundle.bind(g, trainable);
    let prev = g.constant(pair.prev.clone());
    let cur = g.constant(pair.cur.clone());
    let f_prev = bundle.encode_var(g, &b, prev)?;
    let f_cur = bundle.encode_var(g, &b, cur)?;
    let (_, _, fh, fw) = g.value(f_cur).dims4()?;

    let flow = bundle.flow_var(g, &b, prev, cur)?;
    let flow_feat = resize_flow_var(g, flow, fh, fw)?;
    let warped = warp_features_var(g, f_prev, flow_feat)?;
    let delta = feature_delta_var(g, f_cur, warped)?;
    let mask = bundle.mask_var(g, &b, delta)?;
    let composite = compose_features_var(g, f_cur, warped, mask)?;
    let o_cur = bundle.decode_var(g, &b, composite)?;
    let s_cur = bundle.decode_var(g, &b, f_cur)?;
    let s_prev = bundle.decode_var(g, &b, f_prev)?;

    let gt_flow = g.constant(pair.gt_flow.tensor().clone());
    let gt_mask = g.constant(pair.gt_mask.tensor().clone());
    let l_cohe = loss_coherence_var(g, o_cur, s_prev, gt_flow, gt_mask)?;
    let l_occ = loss_occlusion_var(g, o_cur, s_cur, gt_mask)?;
    let (_, _, ph, pw) = g.value(flow).dims4()?;
    let gt_small = g.constant(resize_flow(&pair.gt_flow, ph, pw)?.into_tensor());
    let l_flow = loss_flow_var(g, flow, gt_small)?;

    let mut leaves = Vec::new();
    for &c in trainable {
        leaves.extend_from_slice(b.get(c));
    }
    Ok((leaves, [l_cohe, l_occ, l_flow]))
}

/// Evaluates the three loss terms without updating anything.
pub fn evaluate_losses(bundle: &ModelBundle, pair: &TrainingPair, weights: &LossWeights) -> Result<(LossParts, f64)> {
    let mut g = Graph::new();
    let (_, [a, b, c]) = forward_losses(&mut g, bundle, pair, &[])?;
    let parts = LossParts {
        coherence: g.value(a).data()[0],
        occlusion: g.value(b).data()[0],
        flow: g.value(c).data()[0],
    };
    Ok((parts, loss_total(&parts, weights)))
}

/// One Adam update of the unfrozen coherence networks on `pair`.
pub fn train_step(
    bundle: &mut ModelBundle,
    pair: &TrainingPair,
    cfg: &TrainConfig,
    opt: &mut Adam,
    iteration: usize,
) -> Result<LossReport> {
    let trainable = bundle.trainable();
    let mut g = Graph::new();
    let (leaves, [l_cohe, l_occ, l_flow]) = forward_losses(&mut g, bundle, pair, &trainable)?;
    let parts = LossParts {
        coherence: g.value(l_cohe).data()[0],
        occlusion: g.value(l_occ).data()[0],
        flow: g.value(l_flow).data()[0],
    };
    let w = cfg.loss_weights;
    let total = loss_total(&parts, &w);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "iteration {iteration}: coherence {} occlusion {} flow {} total {total}",
            parts.coherence, parts.occlusion, parts.flow
        )));
    }
    let lr = cfg.schedule().lr(iteration);
    let report = LossReport {
        iteration,
        lr,
        parts,
        total,
    };
    if leaves.is_empty() {
        return Ok(report);
    }
    let a = g.scale(l_cohe, w.alpha);
    let b = g.scale(l_occ, w.beta);
    let c = g.scale(l_flow, w.lambda);
    let ab = g.add(a, b)?;
    let loss = g.add(ab, c)?;
    g.backward(loss)?;

    let grads: Vec<Tensor> = leaves
        .iter()
        .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
        .collect();
    if let Some(i) = grads.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!(
            "iteration {iteration}: gradient of parameter {i}; coherence {} occlusion {} flow {} total {total}",
            parts.coherence, parts.occlusion, parts.flow
        )));
    }
    let mut params: Vec<Tensor> = Vec::with_capacity(leaves.len());
    for &c in &trainable {
        params.append(&mut std::mem::take(&mut bundle.params_mut(c).tensors));
    }
    let stepped = opt.step(&mut params, &grads, lr);
    let mut it = params.into_iter();
    for &c in &trainable {
        let n = bundle.params(c).names.len();
        bundle.params_mut(c).tensors = it.by_ref().take(n).collect();
    }
    stepped?;
    Ok(report)
}

/// Stateful training driver: owns the bundle, the optimizer and the pair
/// sampler.
pub struct Trainer {
    bundle: ModelBundle,
    cfg: TrainConfig,
    opt: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(mut bundle: ModelBundle, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if bundle.style_spec().split != cfg.split_layer {
            return Err(Error::SpecMismatch(format!(
                "bundle split layer {} differs from configured {}",
                bundle.style_spec().split,
                cfg.split_layer
            )));
        }
        bundle.freeze.style = true;
        bundle.freeze.flow = cfg.freeze_flow;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
        Ok(Self {
            bundle,
            cfg,
            opt: Adam::new(AdamConfig::default(), true),
            rng,
            iteration: 0,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> ModelBundle {
        self.bundle
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn step(&mut self, pair: &TrainingPair) -> Result<LossReport> {
        let r = train_step(&mut self.bundle, pair, &self.cfg, &mut self.opt, self.iteration)?;
        self.iteration += 1;
        Ok(r)
    }

    /// Draws `batch` pairs uniformly over all (clip, pair) positions.
    pub fn sample(&mut self, dataset: &[ClipSample]) -> Result<TrainingPair> {
        let total: usize = dataset.iter().map(ClipSample::pairs).sum();
        if total == 0 {
            return Err(Error::Contract("training dataset has no frame pairs".into()));
        }
        let mut picked = Vec::with_capacity(self.cfg.batch);
        for _ in 0..self.cfg.batch {
            let mut k = self.rng.gen_range(0..total);
            let clip = dataset
                .iter()
                .find(|c| {
                    if k < c.pairs() {
                        true
                    } else {
                        k -= c.pairs();
                        false
                    }
                })
                .expect("index within total");
            picked.push(TrainingPair::from_clip(clip, k)?);
        }
        if picked.len() == 1 {
            Ok(picked.pop().expect("one pair"))
        } else {
            TrainingPair::stack(&picked)
        }
    }
}

/// Runs `cfg.iterations` steps on pairs sampled from `dataset`.
/// `checkpoint` is called with the step count every `cfg.checkpoint_every`
/// steps; `log` receives every report.
pub fn train(
    bundle: ModelBundle,
    dataset: &[ClipSample],
    cfg: &TrainConfig,
    mut log: impl FnMut(&LossReport) -> Result<()>,
    mut checkpoint: impl FnMut(usize, &ModelBundle) -> Result<()>,
) -> Result<(ModelBundle, Vec<LossReport>)> {
    if dataset.iter().all(|c| c.pairs() == 0) {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    let mut t = Trainer::new(bundle, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let pair = t.sample(dataset)?;
        let r = t.step(&pair)?;
        log(&r)?;
        history.push(r);
        if cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 {
            checkpoint(i + 1, t.bundle())?;
        }
    }
    Ok((t.into_bundle(), history))
}
