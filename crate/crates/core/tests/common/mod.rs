#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidstyle::coherence::FlowField;
use vidstyle::groundtruth::OcclusionParams;
use vidstyle::Tensor;

/// Flow value at integer pixel (x, y), clamped to the frame.
fn px(f: &FlowField, c: usize, x: i64, y: i64) -> f64 {
    let (h, w) = f.dims();
    let xc = x.clamp(0, w as i64 - 1) as usize;
    let yc = y.clamp(0, h as i64 - 1) as usize;
    f.tensor().at4(0, c, yc, xc)
}

fn bilinear(f: &FlowField, c: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (ax, ay) = (x - x0, y - y0);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let top = px(f, c, xi, yi) * (1.0 - ax) + px(f, c, xi + 1, yi) * ax;
    let bot = px(f, c, xi, yi + 1) * (1.0 - ax) + px(f, c, xi + 1, yi + 1) * ax;
    top * (1.0 - ay) + bot * ay
}

fn diff(f: &FlowField, c: usize, x: usize, y: usize, dx: bool) -> f64 {
    let (h, w) = f.dims();
    let (i, n) = if dx { (x, w) } else { (y, h) };
    let v = |k: usize| if dx { f.tensor().at4(0, c, y, k) } else { f.tensor().at4(0, c, k, x) };
    match n {
        1 => 0.0,
        _ if i == 0 => v(1) - v(0),
        _ if i == n - 1 => v(n - 1) - v(n - 2),
        _ => (v(i + 1) - v(i - 1)) / 2.0,
    }
}

/// Per-pixel scalar reference for the traceability mask of a single-batch pair.
pub fn reference_mask(fwd: &FlowField, bwd: &FlowField, p: &OcclusionParams) -> Vec<f64> {
    let (h, w) = bwd.dims();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = bwd.at(0, y, x);
            let (sx, sy) = (x as f64 + u, y as f64 + v);
            let inside = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64;
            let mut grad = 0.0;
            for c in 0..2 {
                grad += diff(bwd, c, x, y, true).powi(2) + diff(bwd, c, x, y, false).powi(2);
            }
            let boundary = grad > p.boundary_coeff * (u * u + v * v) + p.boundary_bias;
            let ok = inside && !boundary && {
                let (fu, fv) = (bilinear(fwd, 0, sx, sy), bilinear(fwd, 1, sx, sy));
                let lhs = (u + fu).powi(2) + (v + fv).powi(2);
                lhs <= p.cross_check_coeff * (u * u + v * v + fu * fu + fv * fv) + p.cross_check_bias
            };
            out.push(if ok { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Random flow pair: a smooth backward field, a forward field that mostly
/// cancels it, with scattered inconsistent patches.
pub fn random_flow_pair(seed: u64, max_side: usize) -> (FlowField, FlowField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.gen_range(2..=max_side);
    let w = rng.gen_range(2..=max_side);
    let (bu, bv) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let ripple = rng.gen_range(0.0..1.5);
    let mut b = vec![0.0; 2 * h * w];
    let mut f = vec![0.0; 2 * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let r = ripple * ((x as f64) * 0.4 + (y as f64) * 0.3).sin();
            b[i] = bu + r;
            b[h * w + i] = bv - r;
            let noise = if rng.gen_bool(0.2) { rng.gen_range(-4.0..4.0) } else { rng.gen_range(-0.3..0.3) };
            f[i] = -bu + noise;
            f[h * w + i] = -bv + rng.gen_range(-0.3..0.3);
        }
    }
    let mk = |d: Vec<f64>| FlowField::new(Tensor::new(vec![1, 2, h, w], d).unwrap()).unwrap();
    (mk(f), mk(b))
}
