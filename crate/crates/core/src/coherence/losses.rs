use crate::error::{Error, Result};
use crate::numeric::{Graph, Tensor, Var};

use super::{same_spatial, warp_features_var, FlowField, LossWeights, MaskMap};

/// `mean(mask ⊙ (a - b)²)`, mean taken over every element of `a - b`.
pub fn masked_mse_var(g: &mut Graph, a: Var, b: Var, mask: Var) -> Result<Var> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(Error::shape("masked_mse", format!("{sa:?} vs {sb:?}")));
    }
    same_spatial("masked_mse", g, a, mask)?;
    let d = g.sub(a, b)?;
    let sq = g.square(d);
    let w = g.mul(mask, sq)?;
    Ok(g.mean(w))
}

/// Coherence term: the output against the previous independent
/// stylization warped by the ground-truth flow, on the traceable region.
/// Flow and mask are at image resolution.
pub fn loss_coherence_var(g: &mut Graph, o_cur: Var, s_prev: Var, gt_flow: Var, gt_mask: Var) -> Result<Var> {
    let warped = warp_features_var(g, s_prev, gt_flow)?;
    masked_mse_var(g, o_cur, warped, gt_mask)
}

/// Occlusion term: the output against the current independent
/// stylization on the untraceable region `1 - mask`.
pub fn loss_occlusion_var(g: &mut Graph, o_cur: Var, s_cur: Var, gt_mask: Var) -> Result<Var> {
    let neg = g.scale(gt_mask, -1.0);
    let inv = g.shift(neg, 1.0);
    masked_mse_var(g, o_cur, s_cur, inv)
}

/// Flow term: mean squared difference over both channels. The ground
/// truth must already be resized to the prediction's resolution.
pub fn loss_flow_var(g: &mut Graph, pred: Var, gt: Var) -> Result<Var> {
    let (sp, sg) = (g.value(pred).shape(), g.value(gt).shape());
    if sp != sg {
        return Err(Error::Contract(format!(
            "loss_flow: predicted flow {sp:?} vs ground truth {sg:?}; resize the ground truth first"
        )));
    }
    let d = g.sub(pred, gt)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

fn eval(f: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let v = f(&mut g)?;
    Ok(g.value(v).data()[0])
}

pub fn loss_coherence(o_cur: &Tensor, s_prev: &Tensor, gt_flow: &FlowField, gt_mask: &MaskMap) -> Result<f64> {
    eval(|g| {
        let o = g.constant(o_cur.clone());
        let s = g.constant(s_prev.clone());
        let f = g.constant(gt_flow.tensor().clone());
        let m = g.constant(gt_mask.tensor().clone());
        loss_coherence_var(g, o, s, f, m)
    })
}

pub fn loss_occlusion(o_cur: &Tensor, s_cur: &Tensor, gt_mask: &MaskMap) -> Result<f64> {
    eval(|g| {
        let o = g.constant(o_cur.clone());
        let s = g.constant(s_cur.clone());
        let m = g.constant(gt_mask.tensor().clone());
        loss_occlusion_var(g, o, s, m)
    })
}

pub fn loss_flow(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    eval(|g| {
        let p = g.constant(pred.tensor().clone());
        let t = g.constant(gt.tensor().clone());
        loss_flow_var(g, p, t)
    })
}

/// The three loss terms of one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub coherence: f64,
    pub occlusion: f64,
    pub flow: f64,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        loss_total(self, w)
    }
}

/// `alpha · coherence + beta · occlusion + lambda · flow`.
pub fn loss_total(parts: &LossParts, w: &LossWeights) -> f64 {
    w.alpha * parts.coherence + w.beta * parts.occlusion + w.lambda * parts.flow
}

/// Masked squared difference between the current output and the flow-warped
/// previous output. Lower is more stable.
pub fn stability_error(o_cur: &Tensor, o_prev: &Tensor, gt_flow: &FlowField, gt_mask: &MaskMap) -> Result<f64> {
    let (_, _, h, w) = o_cur.dims4()?;
    if gt_flow.dims() != (h, w) || gt_mask.dims() != (h, w) {
        return Err(Error::shape(
            "stability_error",
            format!(
                "outputs are {h}x{w} but flow is {:?} and mask is {:?}",
                gt_flow.dims(),
                gt_mask.dims()
            ),
        ));
    }
    loss_coherence(o_cur, o_prev, gt_flow, gt_mask)
}

/// Per-pair stability errors of a sequence and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub per_pair: Vec<f64>,
    pub mean: f64,
}

/// `flows[i]` and `masks[i]` relate `outputs[i]` to `outputs[i + 1]`.
pub fn stability_error_sequence(outputs: &[Tensor], flows: &[FlowField], masks: &[MaskMap]) -> Result<StabilityReport> {
    if outputs.len() < 2 || flows.len() != outputs.len() - 1 || masks.len() != flows.len() {
        return Err(Error::Contract(format!(
            "stability: {} outputs need {} flows and masks, got {} and {}",
            outputs.len(),
            outputs.len().saturating_sub(1),
            flows.len(),
            masks.len()
        )));
    }
    let per_pair = outputs
        .windows(2)
        .zip(flows.iter().zip(masks))
        .map(|(o, (f, m))| stability_error(&o[1], &o[0], f, m))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    Ok(StabilityReport { per_pair, mean })
}
