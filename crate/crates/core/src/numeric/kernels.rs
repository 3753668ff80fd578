//! Forward and adjoint kernels on raw buffers. The graph layer owns shape
//! validation; these functions assume consistent extents.

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in bounds.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        valid_range(self.out_w, self.in_w, self.stride, kx, self.pad)
    }

    fn oy_range(&self, ky: usize) -> (usize, usize) {
        valid_range(self.out_h, self.in_h, self.stride, ky, self.pad)
    }
}

fn valid_range(out: usize, input: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let s = stride as i64;
    let off = k as i64 - pad as i64;
    // o*s + off >= 0  and  o*s + off <= input-1
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let hi_num = input as i64 - 1 - off;
    let hi = if hi_num < 0 { -1 } else { hi_num / s };
    let lo = lo.max(0) as usize;
    let hi = (hi + 1).clamp(0, out as i64) as usize;
    (lo.min(hi), hi)
}

/// Cross-correlation: `out[n,oc] = bias[oc] + sum_ic w[oc,ic] ⋆ in[n,ic]`.
pub(crate) fn conv2d_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let plane_out = g.out_h * g.out_w;
    let plane_in = g.in_h * g.in_w;
    let kk = g.k * g.k;
    let mut out = vec![0.0; g.n * g.out_c * plane_out];
    for n in 0..g.n {
        for oc in 0..g.out_c {
            let o_base = (n * g.out_c + oc) * plane_out;
            let o = &mut out[o_base..o_base + plane_out];
            if let Some(b) = bias {
                o.iter_mut().for_each(|v| *v = b[oc]);
            }
            for ic in 0..g.in_c {
                let i_base = (n * g.in_c + ic) * plane_in;
                let inp = &input[i_base..i_base + plane_in];
                let w_base = (oc * g.in_c + ic) * kk;
                for ky in 0..g.k {
                    let (oy0, oy1) = g.oy_range(ky);
                    for kx in 0..g.k {
                        let wv = weight[w_base + ky * g.k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = g.ox_range(kx);
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let orow = &mut o[oy * g.out_w..(oy + 1) * g.out_w];
                            let irow = &inp[iy * g.in_w..(iy + 1) * g.in_w];
                            if g.stride == 1 {
                                let ix0 = ox0 + kx - g.pad;
                                let len = ox1 - ox0;
                                for (ov, iv) in orow[ox0..ox1].iter_mut().zip(&irow[ix0..ix0 + len]) {
                                    *ov += wv * iv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += wv * irow[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_forward`] with respect to its input (no bias term).
/// This is also the forward map of a transposed convolution.
pub(crate) fn conv2d_adjoint_input(g: &ConvGeom, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    let plane_out = g.out_h * g.out_w;
    let plane_in = g.in_h * g.in_w;
    let kk = g.k * g.k;
    let mut gin = vec![0.0; g.n * g.in_c * plane_in];
    for n in 0..g.n {
        for oc in 0..g.out_c {
            let o_base = (n * g.out_c + oc) * plane_out;
            let go = &grad_out[o_base..o_base + plane_out];
            for ic in 0..g.in_c {
                let i_base = (n * g.in_c + ic) * plane_in;
                let gi = &mut gin[i_base..i_base + plane_in];
                let w_base = (oc * g.in_c + ic) * kk;
                for ky in 0..g.k {
                    let (oy0, oy1) = g.oy_range(ky);
                    for kx in 0..g.k {
                        let wv = weight[w_base + ky * g.k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = g.ox_range(kx);
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &go[oy * g.out_w..(oy + 1) * g.out_w];
                            let irow = &mut gi[iy * g.in_w..(iy + 1) * g.in_w];
                            if g.stride == 1 {
                                let ix0 = ox0 + kx - g.pad;
                                let len = ox1 - ox0;
                                for (iv, gv) in irow[ix0..ix0 + len].iter_mut().zip(&grow[ox0..ox1]) {
                                    *iv += wv * gv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    irow[ox * g.stride + kx - g.pad] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}

/// Gradient of [`conv2d_forward`] with respect to the weights.
pub(crate) fn conv2d_weight_grad(g: &ConvGeom, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let plane_out = g.out_h * g.out_w;
    let plane_in = g.in_h * g.in_w;
    let kk = g.k * g.k;
    let mut gw = vec![0.0; g.out_c * g.in_c * kk];
    for n in 0..g.n {
        for oc in 0..g.out_c {
            let o_base = (n * g.out_c + oc) * plane_out;
            let go = &grad_out[o_base..o_base + plane_out];
            for ic in 0..g.in_c {
                let i_base = (n * g.in_c + ic) * plane_in;
                let inp = &input[i_base..i_base + plane_in];
                let w_base = (oc * g.in_c + ic) * kk;
                for ky in 0..g.k {
                    let (oy0, oy1) = g.oy_range(ky);
                    for kx in 0..g.k {
                        let (ox0, ox1) = g.ox_range(kx);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &go[oy * g.out_w..(oy + 1) * g.out_w];
                            let irow = &inp[iy * g.in_w..(iy + 1) * g.in_w];
                            if g.stride == 1 {
                                let ix0 = ox0 + kx - g.pad;
                                let len = ox1 - ox0;
                                acc += grow[ox0..ox1]
                                    .iter()
                                    .zip(&irow[ix0..ix0 + len])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            } else {
                                for ox in ox0..ox1 {
                                    acc += grow[ox] * irow[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                        gw[w_base + ky * g.k + kx] += acc;
                    }
                }
            }
        }
    }
    gw
}

/// Per-channel sum over batch and space (bias gradient).
pub(crate) fn channel_sums(n: usize, c: usize, plane: usize, grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for b in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            let base = (b * c + ch) * plane;
            *acc += grad[base..base + plane].iter().sum::<f64>();
        }
    }
    out
}

/// Bilinear tap: the two integer neighbours and the weight of the upper one
/// for a coordinate already clamped to `[0, size-1]`.
#[inline]
pub(crate) fn bilinear_tap(coord: f64, size: usize) -> (usize, usize, f64) {
    let i0 = (coord.floor() as usize).min(size - 1);
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, coord - i0 as f64)
}

/// Sample location for output index `dst` under the half-pixel-centre
/// convention: `src = (dst + 0.5) * in / out - 0.5`, clamped to the edge.
#[inline]
pub(crate) fn resize_coord(dst: usize, in_size: usize, out_size: usize) -> f64 {
    let scale = in_size as f64 / out_size as f64;
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_size - 1) as f64)
}

pub(crate) struct SampleGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

/// `out[n,c,y,x] = bilinear(input[n,c], x + flow[n,0,y,x], y + flow[n,1,y,x])`,
/// source coordinates clamped to the border.
pub(crate) fn grid_sample_forward(g: &SampleGeom, input: &[f64], flow: &[f64]) -> Vec<f64> {
    let plane = g.h * g.w;
    let mut out = vec![0.0; g.n * g.c * plane];
    for n in 0..g.n {
        let fx = &flow[(n * 2) * plane..(n * 2 + 1) * plane];
        let fy = &flow[(n * 2 + 1) * plane..(n * 2 + 2) * plane];
        for y in 0..g.h {
            for x in 0..g.w {
                let p = y * g.w + x;
                let sx = (x as f64 + fx[p]).clamp(0.0, (g.w - 1) as f64);
                let sy = (y as f64 + fy[p]).clamp(0.0, (g.h - 1) as f64);
                let (x0, x1, ax) = bilinear_tap(sx, g.w);
                let (y0, y1, ay) = bilinear_tap(sy, g.h);
                for c in 0..g.c {
                    let src = &input[(n * g.c + c) * plane..(n * g.c + c + 1) * plane];
                    out[(n * g.c + c) * plane + p] = if ax == 0.0 && ay == 0.0 {
                        src[y0 * g.w + x0]
                    } else {
                        (1.0 - ay) * ((1.0 - ax) * src[y0 * g.w + x0] + ax * src[y0 * g.w + x1])
                            + ay * ((1.0 - ax) * src[y1 * g.w + x0] + ax * src[y1 * g.w + x1])
                    };
                }
            }
        }
    }
    out
}

/// Gradients of [`grid_sample_forward`] with respect to input and flow.
pub(crate) fn grid_sample_backward(
    g: &SampleGeom,
    input: &[f64],
    flow: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let plane = g.h * g.w;
    let mut gin = vec![0.0; input.len()];
    let mut gflow = vec![0.0; flow.len()];
    let (wmax, hmax) = ((g.w - 1) as f64, (g.h - 1) as f64);
    for n in 0..g.n {
        for y in 0..g.h {
            for x in 0..g.w {
                let p = y * g.w + x;
                let fxi = (n * 2) * plane + p;
                let fyi = (n * 2 + 1) * plane + p;
                let rx = x as f64 + flow[fxi];
                let ry = y as f64 + flow[fyi];
                let x_live = (0.0..=wmax).contains(&rx);
                let y_live = (0.0..=hmax).contains(&ry);
                let (x0, x1, ax) = bilinear_tap(rx.clamp(0.0, wmax), g.w);
                let (y0, y1, ay) = bilinear_tap(ry.clamp(0.0, hmax), g.h);
                let (mut dfx, mut dfy) = (0.0, 0.0);
                for c in 0..g.c {
                    let base = (n * g.c + c) * plane;
                    let go = grad_out[base + p];
                    if go == 0.0 {
                        continue;
                    }
                    let src = &input[base..base + plane];
                    let v00 = src[y0 * g.w + x0];
                    let v01 = src[y0 * g.w + x1];
                    let v10 = src[y1 * g.w + x0];
                    let v11 = src[y1 * g.w + x1];
                    let gi = &mut gin[base..base + plane];
                    gi[y0 * g.w + x0] += go * (1.0 - ay) * (1.0 - ax);
                    gi[y0 * g.w + x1] += go * (1.0 - ay) * ax;
                    gi[y1 * g.w + x0] += go * ay * (1.0 - ax);
                    gi[y1 * g.w + x1] += go * ay * ax;
                    if x_live {
                        dfx += go * ((1.0 - ay) * (v01 - v00) + ay * (v11 - v10));
                    }
                    if y_live {
                        dfy += go * ((1.0 - ax) * (v10 - v00) + ax * (v11 - v01));
                    }
                }
                gflow[fxi] += dfx;
                gflow[fyi] += dfy;
            }
        }
    }
    (gin, gflow)
}

pub(crate) fn resize_forward(
    n_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    input: &[f64],
) -> Vec<f64> {
    let taps_x: Vec<_> = (0..out_w)
        .map(|x| bilinear_tap(resize_coord(x, in_w, out_w), in_w))
        .collect();
    let taps_y: Vec<_> = (0..out_h)
        .map(|y| bilinear_tap(resize_coord(y, in_h, out_h), in_h))
        .collect();
    let mut out = vec![0.0; n_c * out_h * out_w];
    for plane in 0..n_c {
        let src = &input[plane * in_h * in_w..(plane + 1) * in_h * in_w];
        let dst = &mut out[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        for (oy, &(y0, y1, ay)) in taps_y.iter().enumerate() {
            for (ox, &(x0, x1, ax)) in taps_x.iter().enumerate() {
                dst[oy * out_w + ox] = if ax == 0.0 && ay == 0.0 {
                    src[y0 * in_w + x0]
                } else {
                    (1.0 - ay) * ((1.0 - ax) * src[y0 * in_w + x0] + ax * src[y0 * in_w + x1])
                        + ay * ((1.0 - ax) * src[y1 * in_w + x0] + ax * src[y1 * in_w + x1])
                };
            }
        }
    }
    out
}

pub(crate) fn resize_backward(
    n_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    grad_out: &[f64],
) -> Vec<f64> {
    let taps_x: Vec<_> = (0..out_w)
        .map(|x| bilinear_tap(resize_coord(x, in_w, out_w), in_w))
        .collect();
    let taps_y: Vec<_> = (0..out_h)
        .map(|y| bilinear_tap(resize_coord(y, in_h, out_h), in_h))
        .collect();
    let mut gin = vec![0.0; n_c * in_h * in_w];
    for plane in 0..n_c {
        let go = &grad_out[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        let gi = &mut gin[plane * in_h * in_w..(plane + 1) * in_h * in_w];
        for (oy, &(y0, y1, ay)) in taps_y.iter().enumerate() {
            for (ox, &(x0, x1, ax)) in taps_x.iter().enumerate() {
                let g = go[oy * out_w + ox];
                gi[y0 * in_w + x0] += g * (1.0 - ay) * (1.0 - ax);
                gi[y0 * in_w + x1] += g * (1.0 - ay) * ax;
                gi[y1 * in_w + x0] += g * ay * (1.0 - ax);
                gi[y1 * in_w + x1] += g * ay * ax;
            }
        }
    }
    gin
}

/// Broadcast output shape for two equal-rank shapes (each axis equal or 1).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a.len() != b.len() {
        return None;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, _) => Some(y),
            (_, 1) => Some(x),
            _ => None,
        })
        .collect()
}

/// Index into a tensor of `shape` for every element of `out_shape`, with
/// size-1 axes repeated.
pub(crate) fn broadcast_index(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let total: usize = out_shape.iter().product();
    if shape == out_shape {
        return (0..total).collect();
    }
    let rank = out_shape.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for d in (0..rank).rev() {
        strides[d] = if shape[d] == 1 { 0 } else { s };
        s *= shape[d];
    }
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        idx.push(cur);
        for d in (0..rank).rev() {
            counter[d] += 1;
            cur += strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            cur -= strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    idx
}

/// Sums a full-size gradient back onto a broadcast operand.
pub(crate) fn reduce_to(shape: &[usize], index: &[usize], grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; shape.iter().product()];
    for (&i, &g) in index.iter().zip(grad) {
        out[i] += g;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bruteforce() {
        for out in 1..6 {
            for input in 1..9 {
                for stride in 1..4 {
                    for k in 0..4 {
                        for pad in 0..3 {
                            let brute: Vec<usize> = (0..out)
                                .filter(|&o| {
                                    let i = (o * stride + k) as i64 - pad as i64;
                                    i >= 0 && i < input as i64
                                })
                                .collect();
                            let (lo, hi) = valid_range(out, input, stride, k, pad);
                            let fast: Vec<usize> = (lo..hi).collect();
                            assert_eq!(brute, fast, "out={out} in={input} s={stride} k={k} p={pad}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn broadcast_index_repeats_unit_axes() {
        let idx = broadcast_index(&[1, 1, 2, 2], &[1, 3, 2, 2]);
        assert_eq!(idx, vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(broadcast_shape(&[1, 1, 2, 2], &[2, 3, 2, 2]), Some(vec![2, 3, 2, 2]));
        assert_eq!(broadcast_shape(&[1, 2, 2, 2], &[1, 3, 2, 2]), None);
    }
}
