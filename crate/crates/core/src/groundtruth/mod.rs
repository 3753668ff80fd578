//! Supervision: occlusion masks from bidirectional flows and synthetic
//! clips with exact flow and occlusion.

mod synth;

pub use synth::{synth_clip, ClipSample, MotionKind, SynthConfig};

use crate::coherence::{FlowField, MaskMap};
use crate::error::{Error, Result};
use crate::numeric::kernels::bilinear_tap;
use crate::numeric::Tensor;

/// Thresholds of the forward/backward consistency test and the
/// motion-boundary test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcclusionParams {
    pub cross_check_coeff: f64,
    pub cross_check_bias: f64,
    pub boundary_coeff: f64,
    pub boundary_bias: f64,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            cross_check_coeff: 0.01,
            cross_check_bias: 0.5,
            boundary_coeff: 0.01,
            boundary_bias: 0.002,
        }
    }
}

impl OcclusionParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cross_check_coeff,
            self.cross_check_bias,
            self.boundary_coeff,
            self.boundary_bias,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("occlusion thresholds must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    /// Motion-boundary test for one pixel.
    pub fn is_boundary(&self, grad_sq: f64, flow_sq: f64) -> bool {
        grad_sq > self.boundary_coeff * flow_sq + self.boundary_bias
    }
}

/// `true` when `x + dx`, `y + dy` lies outside the pixel-centre extent of a
/// `w`×`h` frame.
pub fn source_out_of_frame(x: usize, y: usize, dx: f64, dy: f64, h: usize, w: usize) -> bool {
    let sx = x as f64 + dx;
    let sy = y as f64 + dy;
    !(sx >= 0.0 && sx <= (w - 1) as f64 && sy >= 0.0 && sy <= (h - 1) as f64)
}

fn derivative(plane: &[f64], w: usize, h: usize, x: usize, y: usize, horizontal: bool) -> f64 {
    let (i, n) = if horizontal { (x, w) } else { (y, h) };
    if n < 2 {
        return 0.0;
    }
    let at = |k: usize| {
        if horizontal {
            plane[y * w + k]
        } else {
            plane[k * w + x]
        }
    };
    if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        (at(i + 1) - at(i - 1)) / 2.0
    }
}

/// `|∇u|² + |∇v|²` per pixel (central differences, one-sided at borders),
/// shaped B×1×H×W.
pub fn flow_gradient_magnitude(flow: &FlowField) -> Tensor {
    let t = flow.tensor();
    let (n, _, h, w) = (t.shape()[0], 2, t.shape()[2], t.shape()[3]);
    let plane = h * w;
    let mut out = vec![0.0; n * plane];
    for b in 0..n {
        for c in 0..2 {
            let p = &t.data()[(b * 2 + c) * plane..(b * 2 + c + 1) * plane];
            for y in 0..h {
                for x in 0..w {
                    let gx = derivative(p, w, h, x, y, true);
                    let gy = derivative(p, w, h, x, y, false);
                    out[b * plane + y * w + x] += gx * gx + gy * gy;
                }
            }
        }
    }
    Tensor::from_raw(vec![n, 1, h, w], out)
}

/// Binary traceability mask for the backward flow `backward` (frame t to
/// t-1) given the forward flow `forward` (frame t-1 to t).
///
/// A pixel is 0 when its source leaves the frame, when the forward flow at
/// the source does not cancel the backward flow, or when it sits on a
/// motion boundary of the backward flow.
pub fn occlusion_mask(forward: &FlowField, backward: &FlowField, params: &OcclusionParams) -> Result<MaskMap> {
    params.validate()?;
    let (ft, bt) = (forward.tensor(), backward.tensor());
    if ft.shape() != bt.shape() {
        return Err(Error::shape(
            "occlusion_mask",
            format!("forward flow {:?} vs backward flow {:?}", ft.shape(), bt.shape()),
        ));
    }
    let (n, _, h, w) = ft.dims4()?;
    let plane = h * w;
    let grad = flow_gradient_magnitude(backward);
    let mut out = vec![1.0; n * plane];
    for b in 0..n {
        let fu = &ft.data()[(b * 2) * plane..(b * 2 + 1) * plane];
        let fv = &ft.data()[(b * 2 + 1) * plane..(b * 2 + 2) * plane];
        for y in 0..h {
            for x in 0..w {
                let (bu, bv) = backward.at(b, y, x);
                let i = y * w + x;
                let flow_sq = bu * bu + bv * bv;
                if source_out_of_frame(x, y, bu, bv, h, w) || params.is_boundary(grad.data()[b * plane + i], flow_sq) {
                    out[b * plane + i] = 0.0;
                    continue;
                }
                let sx = x as f64 + bu;
                let sy = y as f64 + bv;
                let (x0, x1, ax) = bilinear_tap(sx, w);
                let (y0, y1, ay) = bilinear_tap(sy, h);
                let sample = |p: &[f64]| {
                    let top = p[y0 * w + x0] * (1.0 - ax) + p[y0 * w + x1] * ax;
                    let bot = p[y1 * w + x0] * (1.0 - ax) + p[y1 * w + x1] * ax;
                    top * (1.0 - ay) + bot * ay
                };
                let (wu, wv) = (sample(fu), sample(fv));
                let (ru, rv) = (bu + wu, bv + wv);
                let lhs = ru * ru + rv * rv;
                let rhs = params.cross_check_coeff * (flow_sq + wu * wu + wv * wv) + params.cross_check_bias;
                if lhs > rhs {
                    out[b * plane + i] = 0.0;
                }
            }
        }
    }
    MaskMap::new(Tensor::from_raw(vec![n, 1, h, w], out))
}
