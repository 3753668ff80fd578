//! Feature warping, mask composition, the training losses and the
//! stability metric.
//!
//! Every squared norm is reduced with a mean over all elements of the
//! residual (after mask weighting), so magnitudes do not depend on
//! resolution. Masks weight the squared residual.

mod losses;
mod types;

pub use losses::{
    loss_coherence, loss_coherence_var, loss_flow, loss_flow_var, loss_occlusion, loss_occlusion_var, loss_total,
    masked_mse_var, stability_error, stability_error_sequence, LossParts, StabilityReport,
};
pub use types::{FlowField, LossWeights, MaskMap};

use crate::error::{Error, Result};
use crate::numeric::{Graph, Tensor, Var};

fn same_spatial(op: &'static str, g: &Graph, a: Var, b: Var) -> Result<()> {
    let (_, _, ah, aw) = g.value(a).dims4()?;
    let (_, _, bh, bw) = g.value(b).dims4()?;
    if (ah, aw) != (bh, bw) {
        return Err(Error::shape(op, format!("resolution {ah}x{aw} vs {bh}x{bw}")));
    }
    Ok(())
}

/// `out(p) = features(p + flow(p))`; the flow must already be at the
/// feature resolution.
pub fn warp_features_var(g: &mut Graph, features: Var, flow: Var) -> Result<Var> {
    same_spatial("warp_features", g, features, flow)?;
    g.grid_sample(features, flow)
}

pub fn warp_features(features: &Tensor, flow: &FlowField) -> Result<Tensor> {
    let mut g = Graph::new();
    let f = g.constant(features.clone());
    let w = g.constant(flow.tensor().clone());
    let out = warp_features_var(&mut g, f, w)?;
    Ok(g.value(out).clone())
}

/// Bilinear resize of both flow channels, with the displacements rescaled
/// so they stay in target-resolution pixels.
pub fn resize_flow_var(g: &mut Graph, flow: Var, out_h: usize, out_w: usize) -> Result<Var> {
    let (_, c, h, w) = g.value(flow).dims4()?;
    if c != 2 {
        return Err(Error::shape("resize_flow", format!("flow channel axis must be 2, got {c}")));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(flow);
    }
    let r = g.resize_bilinear(flow, out_h, out_w)?;
    let factors = Tensor::new(vec![1, 2, 1, 1], vec![out_w as f64 / w as f64, out_h as f64 / h as f64])?;
    let f = g.constant(factors);
    g.mul(r, f)
}

pub fn resize_flow(flow: &FlowField, out_h: usize, out_w: usize) -> Result<FlowField> {
    let mut g = Graph::new();
    let f = g.constant(flow.tensor().clone());
    let out = resize_flow_var(&mut g, f, out_h, out_w)?;
    FlowField::new(g.value(out).clone())
}

/// `(1 - M) ⊙ F_cur + M ⊙ F_warped`, the mask broadcast over channels.
pub fn compose_features_var(g: &mut Graph, f_cur: Var, f_warped: Var, mask: Var) -> Result<Var> {
    let (cs, ws) = (g.value(f_cur).shape(), g.value(f_warped).shape());
    if cs != ws {
        return Err(Error::shape("compose_features", format!("current {cs:?} vs warped {ws:?}")));
    }
    same_spatial("compose_features", g, f_cur, mask)?;
    let neg = g.scale(mask, -1.0);
    let keep = g.shift(neg, 1.0);
    let a = g.mul(keep, f_cur)?;
    let b = g.mul(mask, f_warped)?;
    g.add(a, b)
}

pub fn compose_features(f_cur: &Tensor, f_warped: &Tensor, mask: &MaskMap) -> Result<Tensor> {
    let mut g = Graph::new();
    let c = g.constant(f_cur.clone());
    let w = g.constant(f_warped.clone());
    let m = g.constant(mask.tensor().clone());
    let out = compose_features_var(&mut g, c, w, m)?;
    Ok(g.value(out).clone())
}

/// Feature difference `|a - b|` fed to the mask network.
pub fn feature_delta_var(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    Ok(g.abs(d))
}
