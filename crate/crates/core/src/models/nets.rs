//! Forward passes of the three sub-networks, recorded on a [`Graph`].
//!
//! Parameters arrive as bound graph leaves in [`Params`] order
//! (weight, bias per layer).

use crate::error::{Error, Result};
use crate::numeric::{Graph, Var};

use super::spec::{FlowNetSpec, MaskNetSpec, StyleNetSpec, StyleStage};

fn layer(vars: &[Var], i: usize) -> (Var, Var) {
    (vars[2 * i], vars[2 * i + 1])
}

fn check_vars(what: &str, vars: &[Var], layers: usize) -> Result<()> {
    if vars.len() != 2 * layers {
        return Err(Error::Contract(format!(
            "{what}: expected {} bound parameters, got {}",
            2 * layers,
            vars.len()
        )));
    }
    Ok(())
}

/// Runs style stages `from..to` on `x`.
fn style_stages(g: &mut Graph, spec: &StyleNetSpec, vars: &[Var], x: Var, from: usize, to: usize) -> Result<Var> {
    check_vars("style net", vars, spec.layers().len())?;
    let stages = spec.stages();
    let mut h = x;
    // parameter layer index at the start of each stage
    let mut li = 0;
    for (si, stage) in stages.iter().enumerate() {
        let width = if *stage == StyleStage::Residual { 2 } else { 1 };
        if si >= from && si < to {
            h = match *stage {
                StyleStage::Conv { stride } => {
                    let (w, b) = layer(vars, li);
                    let y = g.conv2d(h, w, b, stride, 1)?;
                    g.relu(y)
                }
                StyleStage::Residual => {
                    let (wa, ba) = layer(vars, li);
                    let (wb, bb) = layer(vars, li + 1);
                    let y = g.conv2d(h, wa, ba, 1, 1)?;
                    let y = g.relu(y);
                    let y = g.conv2d(y, wb, bb, 1, 1)?;
                    g.add(h, y)?
                }
                StyleStage::Up => {
                    let (w, b) = layer(vars, li);
                    let y = g.conv2d_transposed(h, w, b, 2, 1, 0)?;
                    g.relu(y)
                }
                StyleStage::Output => {
                    let (w, b) = layer(vars, li);
                    let y = g.conv2d(h, w, b, 1, 1)?;
                    let y = g.tanh(y);
                    let y = g.shift(y, 1.0);
                    g.scale(y, 0.5)
                }
            };
        }
        li += width;
    }
    Ok(h)
}

/// Encoder half: frame (B×3×H×W) to split-layer features.
pub fn style_encode(g: &mut Graph, spec: &StyleNetSpec, vars: &[Var], frame: Var) -> Result<Var> {
    let (_, c, h, w) = g.value(frame).dims4()?;
    if c != 3 {
        return Err(Error::shape("style_encode", format!("frame channel axis (dim 1) is {c}, expected 3")));
    }
    let s = StyleNetSpec::TOTAL_STRIDE;
    if h % s != 0 || w % s != 0 {
        return Err(Error::shape(
            "style_encode",
            format!("frame spatial axes {h}x{w} must both be divisible by the encoder stride {s}"),
        ));
    }
    style_stages(g, spec, vars, frame, 0, spec.split_index())
}

/// Decoder half: split-layer features to an image in [0, 1].
pub fn style_decode(g: &mut Graph, spec: &StyleNetSpec, vars: &[Var], features: Var) -> Result<Var> {
    let (_, c, _, _) = g.value(features).dims4()?;
    let want = spec.feature_channels();
    if c != want {
        return Err(Error::shape(
            "style_decode",
            format!("feature channel axis (dim 1) is {c} but split layer {} carries {want}", spec.split),
        ));
    }
    style_stages(g, spec, vars, features, spec.split_index(), usize::MAX)
}

/// Flow prediction at `1 / spec.output_stride()` resolution.
pub fn flow_predict(g: &mut Graph, spec: &FlowNetSpec, vars: &[Var], prev: Var, cur: Var) -> Result<Var> {
    check_vars("flow net", vars, spec.layers().len())?;
    let ps = g.value(prev).shape().to_vec();
    let cs = g.value(cur).shape().to_vec();
    if ps != cs {
        return Err(Error::shape("flow_predict", format!("previous frame {ps:?} vs current frame {cs:?}")));
    }
    let (_, c, h, w) = g.value(prev).dims4()?;
    if c != 3 {
        return Err(Error::shape("flow_predict", format!("frame channel axis (dim 1) is {c}, expected 3")));
    }
    let stride = spec.contract_stride();
    if h % stride != 0 || w % stride != 0 {
        return Err(Error::shape(
            "flow_predict",
            format!("frame spatial axes {h}x{w} must both be divisible by the flow net stride {stride}"),
        ));
    }
    let skip_at = spec
        .skip_index()
        .ok_or_else(|| Error::Config("flow net has no skip stage".into()))?;
    let mut x = g.concat_channels(&[prev, cur])?;
    let mut skip = x;
    for (i, s) in spec.contract.iter().enumerate() {
        let (wv, bv) = layer(vars, i);
        let y = g.conv2d(x, wv, bv, s.stride, 1)?;
        x = g.relu(y);
        if i == skip_at {
            skip = x;
        }
    }
    let n = spec.contract.len();
    let (wv, bv) = layer(vars, n);
    let up = g.conv2d_transposed(x, wv, bv, 2, 1, 0)?;
    let up = g.relu(up);
    let joined = g.concat_channels(&[up, skip])?;
    let (wv, bv) = layer(vars, n + 1);
    let flow = g.conv2d(joined, wv, bv, 1, 1)?;
    Ok(if spec.flow_scale == 1.0 {
        flow
    } else {
        g.scale(flow, spec.flow_scale)
    })
}

/// Single-channel composition mask in (0, 1) from a feature difference.
pub fn mask_predict(g: &mut Graph, spec: &MaskNetSpec, vars: &[Var], delta: Var, channels: usize) -> Result<Var> {
    check_vars("mask net", vars, 3)?;
    let (_, c, _, _) = g.value(delta).dims4()?;
    if c != channels {
        return Err(Error::shape(
            "mask_predict",
            format!("delta channel axis (dim 1) is {c} but the mask net expects {channels}"),
        ));
    }
    let pad = spec.kernel / 2;
    let mut x = delta;
    for i in 0..3 {
        let (w, b) = layer(vars, i);
        let y = g.conv2d(x, w, b, 1, pad)?;
        x = if i < 2 { g.relu(y) } else { g.sigmoid(y) };
    }
    Ok(x)
}
