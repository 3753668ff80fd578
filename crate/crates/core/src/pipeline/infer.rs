use crate::coherence::{
    compose_features_var, feature_delta_var, resize_flow, resize_flow_var, warp_features_var, FlowField, MaskMap,
};
use crate::error::{Error, Result};
use crate::models::{style_decode, style_encode, ModelBundle};
use crate::numeric::{Graph, Tensor};

/// Rolling per-video state: the previous input frame and the previous
/// composite features.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceState {
    pub prev_frame: Tensor,
    pub prev_composite: Tensor,
    /// 1-based index of the frame `prev_frame` holds.
    pub frame_index: usize,
}

/// Result of one propagated frame, with the intermediate flow and mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub image: Tensor,
    /// Predicted flow at the flow network's native resolution.
    pub flow: FlowField,
    /// Composition mask at feature resolution.
    pub mask: MaskMap,
}

/// Substitutes for the predicted flow and mask, used to probe the
/// propagation mechanism in isolation. The flow may be at any resolution;
/// it is resized to the feature resolution. The mask must already be at
/// feature resolution.
#[derive(Clone, Debug)]
pub struct Oracle<'a> {
    pub flow: &'a FlowField,
    pub mask: &'a MaskMap,
}

/// First frame: plain stylization; the state keeps the encoded features.
pub fn stylize_first_frame(bundle: &ModelBundle, frame: &Tensor) -> Result<(Tensor, CoherenceState)> {
    let features = style_encode(bundle, frame)?;
    let image = style_decode(bundle, &features)?;
    let state = CoherenceState {
        prev_frame: frame.clone(),
        prev_composite: features,
        frame_index: 1,
    };
    Ok((image, state))
}

/// Propagates `state.prev_composite` to `frame` and composes it with the
/// fresh features of `frame`.
pub fn stylize_next_frame(bundle: &ModelBundle, state: &CoherenceState, frame: &Tensor) -> Result<(Tensor, CoherenceState)> {
    let (out, st) = stylize_next_frame_detailed(bundle, state, frame, None)?;
    Ok((out.image, st))
}

pub fn stylize_next_frame_detailed(
    bundle: &ModelBundle,
    state: &CoherenceState,
    frame: &Tensor,
    oracle: Option<Oracle<'_>>,
) -> Result<(FrameOutput, CoherenceState)> {
    if frame.shape() != state.prev_frame.shape() {
        return Err(Error::shape(
            "stylize_next_frame",
            format!("frame {:?} differs from the video's {:?}", frame.shape(), state.prev_frame.shape()),
        ));
    }
    let mut g = Graph::new();
    let b = bundle.bind(&mut g, &[]);
    let cur = g.constant(frame.clone());
    let f_cur = bundle.encode_var(&mut g, &b, cur)?;
    let (_, _, fh, fw) = g.value(f_cur).dims4()?;
    let prev_comp = g.constant(state.prev_composite.clone());
    if g.value(prev_comp).shape() != g.value(f_cur).shape() {
        return Err(Error::shape(
            "stylize_next_frame",
            format!(
                "state features {:?} vs fresh features {:?}",
                state.prev_composite.shape(),
                g.value(f_cur).shape()
            ),
        ));
    }

    let (flow_native, flow_feat) = match &oracle {
        Some(o) => {
            let f = resize_flow(o.flow, fh, fw)?;
            (o.flow.clone(), g.constant(f.into_tensor()))
        }
        None => {
            let prev = g.constant(state.prev_frame.clone());
            let flow = bundle.flow_var(&mut g, &b, prev, cur)?;
            let native = FlowField::new(g.value(flow).clone())?;
            (native, resize_flow_var(&mut g, flow, fh, fw)?)
        }
    };
    let warped = warp_features_var(&mut g, prev_comp, flow_feat)?;
    let mask = match &oracle {
        Some(o) => g.constant(o.mask.tensor().clone()),
        None => {
            let delta = feature_delta_var(&mut g, f_cur, warped)?;
            bundle.mask_var(&mut g, &b, delta)?
        }
    };
    let composite = compose_features_var(&mut g, f_cur, warped, mask)?;
    let image = bundle.decode_var(&mut g, &b, composite)?;
    let out = FrameOutput {
        image: g.value(image).clone(),
        flow: flow_native,
        mask: MaskMap::new(g.value(mask).clone())?,
    };
    let next = CoherenceState {
        prev_frame: frame.clone(),
        prev_composite: g.value(composite).clone(),
        frame_index: state.frame_index + 1,
    };
    Ok((out, next))
}

/// Every frame stylized independently.
pub fn stylize_video_baseline(bundle: &ModelBundle, frames: &[Tensor]) -> Result<Vec<Tensor>> {
    frames
        .iter()
        .map(|f| style_decode(bundle, &style_encode(bundle, f)?))
        .collect()
}

/// Online coherent stylization; also returns the masks of frames 2..N.
pub fn stylize_video_coherent(bundle: &ModelBundle, frames: &[Tensor]) -> Result<(Vec<Tensor>, Vec<FrameOutput>)> {
    let Some((first, rest)) = frames.split_first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let (img, mut state) = stylize_first_frame(bundle, first)?;
    let mut images = vec![img];
    let mut details = Vec::with_capacity(rest.len());
    for f in rest {
        let (out, next) = stylize_next_frame_detailed(bundle, &state, f, None)?;
        images.push(out.image.clone());
        details.push(out);
        state = next;
    }
    Ok((images, details))
}
