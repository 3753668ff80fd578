use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidstyle::numeric::{gradcheck, Graph, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct nested-loop cross-correlation.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, wd) = x.dims4().unwrap();
    let (oc, ic, k, _) = w.dims4().unwrap();
    assert_eq!(c, ic);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * oc * oh * ow];
    for bn in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[o];
                    for i in 0..ic {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as i64 - pad as i64;
                                let ix = (xx * stride + kx) as i64 - pad as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                    continue;
                                }
                                acc += w.at4(o, i, ky, kx) * x.at4(bn, i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out[((bn * oc + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out).unwrap()
}

/// Transposed convolution by inserting `stride - 1` zeros between input
/// samples, padding by `k - 1 - pad` (+ `out_pad` bottom/right) and running a
/// stride-1 convolution with the spatially flipped, channel-swapped kernel.
fn zero_stuff_transposed(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize, out_pad: usize) -> Tensor {
    let (n, c, h, wd) = x.dims4().unwrap();
    let (ic, oc, k, _) = w.dims4().unwrap();
    assert_eq!(c, ic);
    let edge = k - 1 - pad;
    let sh = (h - 1) * stride + 1 + 2 * edge + out_pad;
    let sw = (wd - 1) * stride + 1 + 2 * edge + out_pad;
    let mut stuffed = vec![0.0; n * c * sh * sw];
    for bn in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..wd {
                    stuffed[((bn * c + ch) * sh + edge + y * stride) * sw + edge + xx * stride] = x.at4(bn, ch, y, xx);
                }
            }
        }
    }
    let stuffed = Tensor::new(vec![n, c, sh, sw], stuffed).unwrap();
    let mut flipped = vec![0.0; oc * ic * k * k];
    for o in 0..oc {
        for i in 0..ic {
            for ky in 0..k {
                for kx in 0..k {
                    flipped[((o * ic + i) * k + ky) * k + kx] = w.at4(i, o, k - 1 - ky, k - 1 - kx);
                }
            }
        }
    }
    let flipped = Tensor::new(vec![oc, ic, k, k], flipped).unwrap();
    naive_conv(&stuffed, &flipped, b, 1, 0)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn conv2d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, &[1, 2, 5, 5]);
    let w = random(&mut rng, &[3, 2, 3, 3]);
    let b = random(&mut rng, &[3]);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
        let oracle = naive_conv(&x, &w, &b, stride, pad);
        assert_eq!(g.value(y).shape(), oracle.shape());
        assert!(g.value(y).max_abs_diff(&oracle) <= 1e-12, "stride {stride} pad {pad}");
    }
}

#[test]
fn transposed_matches_zero_stuffing_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (k, stride, pad, out_pad) in [(3, 1, 1, 0), (3, 2, 1, 1), (4, 2, 1, 0), (1, 2, 0, 1), (3, 3, 0, 2)] {
        let x = random(&mut rng, &[2, 3, 4, 3]);
        let w = random(&mut rng, &[3, 2, k, k]);
        let b = random(&mut rng, &[2]);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d_transposed(xv, wv, bv, stride, pad, out_pad).unwrap();
        let oracle = zero_stuff_transposed(&x, &w, &b, stride, pad, out_pad);
        assert_eq!(g.value(y).shape(), oracle.shape(), "k{k} s{stride} p{pad} op{out_pad}");
        assert!(g.value(y).max_abs_diff(&oracle) <= 1e-12);
    }
}

#[test]
fn transposed_is_adjoint_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (h, k, stride, pad) in [(6, 3, 1, 1), (8, 3, 2, 1), (8, 4, 2, 1), (7, 3, 2, 0)] {
        let a = random(&mut rng, &[2, 3, h, h]);
        let w = random(&mut rng, &[4, 3, k, k]);
        let mut g = Graph::new();
        let (av, wv) = (g.constant(a.clone()), g.constant(w.clone()));
        let zb4 = g.constant(Tensor::zeros(&[4]));
        let zb3 = g.constant(Tensor::zeros(&[3]));
        let ca = g.conv2d(av, wv, zb4, stride, pad).unwrap();
        let b = random(&mut rng, g.value(ca).shape());
        let bv = g.constant(b.clone());
        // Recover the exact input extent through output padding.
        let (_, _, oh, _) = b.dims4().unwrap();
        let out_pad = h - ((oh - 1) * stride + k - 2 * pad);
        let tb = g.conv2d_transposed(bv, wv, zb3, stride, pad, out_pad).unwrap();
        let lhs = dot(g.value(ca), &b);
        let rhs = dot(&a, g.value(tb));
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn warp_zero_flow_is_bit_exact_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random(&mut rng, &[2, 3, 5, 7]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let f = g.constant(Tensor::zeros(&[2, 2, 5, 7]));
    let y = g.grid_sample(xv, f).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn warp_constant_flow_shifts_ramp_with_clamped_border() {
    let ramp: Vec<f64> = (0..16).map(|i| (i % 4) as f64).collect();
    let mut flow = vec![1.0; 16];
    flow.extend(vec![0.0; 16]);
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, 1, 4, 4], ramp).unwrap());
    let f = g.constant(Tensor::new(vec![1, 2, 4, 4], flow).unwrap());
    let y = g.grid_sample(x, f).unwrap();
    let row = [1.0, 2.0, 3.0, 3.0];
    let expected: Vec<f64> = (0..4).flat_map(|_| row).collect();
    assert_eq!(g.value(y).data(), &expected[..]);
}

#[test]
fn warp_half_pixel_is_midpoint() {
    let (a, b) = (0.2, 0.9);
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, 1, 1, 2], vec![a, b]).unwrap());
    let f = g.constant(Tensor::new(vec![1, 2, 1, 2], vec![0.5, 0.5, 0.0, 0.0]).unwrap());
    let y = g.grid_sample(x, f).unwrap();
    assert!((g.value(y).data()[0] - (a + b) / 2.0).abs() < 1e-15);
    let bad = g.constant(Tensor::zeros(&[1, 3, 1, 2]));
    assert!(g.grid_sample(x, bad).is_err());
}

#[test]
fn resize_conventions() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&mut rng, &[1, 2, 3, 5]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let same = g.resize_bilinear(xv, 3, 5).unwrap();
    assert_eq!(g.value(same), &x);

    let sq = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap());
    let one = g.resize_bilinear(sq, 1, 1).unwrap();
    assert!((g.value(one).data()[0] - 3.0).abs() < 1e-15);

    let c = g.constant(Tensor::full(&[1, 1, 4, 6], 0.7));
    for (h, w) in [(1, 1), (2, 3), (7, 5), (16, 24)] {
        let r = g.resize_bilinear(c, h, w).unwrap();
        assert!(g.value(r).data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }
    assert!(g.resize_bilinear(c, 0, 2).is_err());
}

#[test]
fn conv_sigmoid_mean_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inputs = [random(&mut rng, &[1, 2, 5, 5]), random(&mut rng, &[3, 2, 3, 3]), random(&mut rng, &[3])];
    let r = gradcheck(
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 1)?;
            let s = g.sigmoid(y);
            Ok(g.mean(s))
        },
        &inputs,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.max_rel_error);
}

#[test]
fn warp_flow_gradient_at_fractional_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = random(&mut rng, &[1, 2, 5, 6]);
    let flow: Vec<f64> = (0..60)
        .map(|_| rng.gen_range(-2i32..2) as f64 + 0.25 + rng.gen_range(0.0..0.5))
        .collect();
    let flow = Tensor::new(vec![1, 2, 5, 6], flow).unwrap();
    let r = gradcheck(
        |g, v| {
            let y = g.grid_sample(v[0], v[1])?;
            let sq = g.square(y);
            Ok(g.sum(sq))
        },
        &[x, flow],
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.max_rel_error);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_adjoint_identity_random(seed in 0u64..10_000, h in 3usize..9, w in 3usize..9, stride in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[1, 2, h, w]);
        let wt = random(&mut rng, &[3, 2, 3, 3]);
        let mut g = Graph::new();
        let (av, wv) = (g.constant(a.clone()), g.constant(wt));
        let z3 = g.constant(Tensor::zeros(&[3]));
        let z2 = g.constant(Tensor::zeros(&[2]));
        let ca = g.conv2d(av, wv, z3, stride, 1).unwrap();
        let b = random(&mut rng, g.value(ca).shape());
        let (_, _, oh, ow) = b.dims4().unwrap();
        let base_h = (oh - 1) * stride + 1;
        let base_w = (ow - 1) * stride + 1;
        // out_pad must be the same on both axes; skip geometries where it is not
        prop_assume!(h - base_h == w - base_w);
        let bv = g.constant(b.clone());
        let tb = g.conv2d_transposed(bv, wv, z2, stride, 1, h - base_h).unwrap();
        let lhs = dot(g.value(ca), &b);
        let rhs = dot(&a, g.value(tb));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[1, 2, 6, 6]);
        let w = random(&mut rng, &[2, 2, 3, 3]);
        let run = || {
            let mut g = Graph::new();
            let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
            let b = g.constant(Tensor::zeros(&[2]));
            let y = g.conv2d(xv, wv, b, 1, 1).unwrap();
            let f = g.constant(Tensor::full(&[1, 2, 6, 6], 0.3));
            let z = g.grid_sample(y, f).unwrap();
            g.value(z).clone()
        };
        prop_assert_eq!(run().data().to_vec(), run().data().to_vec());
    }
}
