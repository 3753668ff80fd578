use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidstyle::coherence::{
    compose_features, loss_coherence, loss_flow, loss_occlusion, loss_total, resize_flow, stability_error,
    stability_error_sequence, warp_features, FlowField, LossParts, LossWeights, MaskMap,
};
use vidstyle::Tensor;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

#[test]
fn warp_zero_flow_leaves_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random(&mut rng, &[2, 3, 5, 6], -1.0, 1.0);
    assert_eq!(warp_features(&f, &FlowField::zeros(2, 5, 6)).unwrap(), f);
}

#[test]
fn integer_flow_is_a_gather() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w) = (6, 7);
    let f = random(&mut rng, &[1, 2, h, w], -1.0, 1.0);
    let mut fd = vec![0.0; 2 * h * w];
    for i in 0..h * w {
        fd[i] = rng.gen_range(-3..=3) as f64;
        fd[h * w + i] = rng.gen_range(-3..=3) as f64;
    }
    let flow = FlowField::new(t(&[1, 2, h, w], &fd)).unwrap();
    let out = warp_features(&f, &flow).unwrap();
    for c in 0..2 {
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = flow.at(0, y, x);
                let sx = (x as i64 + dx as i64).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy as i64).clamp(0, h as i64 - 1) as usize;
                assert_eq!(out.at4(0, c, y, x), f.at4(0, c, sy, sx));
            }
        }
    }
}

#[test]
fn resize_flow_rescales_vectors() {
    let f = FlowField::constant(1, 32, 32, 4.0, -2.0);
    let r = resize_flow(&f, 8, 8).unwrap();
    assert_eq!(r.dims(), (8, 8));
    for y in 0..8 {
        for x in 0..8 {
            assert_eq!(r.at(0, y, x), (1.0, -0.5));
        }
    }
    assert_eq!(resize_flow(&f, 32, 32).unwrap(), f);
    let anis = resize_flow(&FlowField::constant(1, 16, 32, 2.0, 2.0), 8, 8).unwrap();
    assert_eq!(anis.at(0, 3, 3), (0.5, 1.0));
}

#[test]
fn smooth_flow_survives_down_and_up() {
    // slopes stay near 0.1 px/px, so the 1.5 px edge clamp costs < 0.25 px
    let (h, w) = (32, 32);
    let mut d = vec![0.0; 2 * h * w];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            d[y * w + x] = 2.0 * (std::f64::consts::TAU * xf / 128.0 + 0.3).sin() + 0.03 * yf;
            d[h * w + y * w + x] = 1.5 * (std::f64::consts::TAU * (xf + yf) / 96.0).cos();
        }
    }
    let f = FlowField::new(t(&[1, 2, h, w], &d)).unwrap();
    let back = resize_flow(&resize_flow(&f, 8, 8).unwrap(), 32, 32).unwrap();
    let err = back.tensor().max_abs_diff(f.tensor());
    assert!(err < 0.25, "{err}");
}

#[test]
fn compose_endpoints_and_average() {
    let a = t(&[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
    let b = t(&[1, 2, 1, 2], &[5.0, 6.0, 7.0, 9.0]);
    assert_eq!(compose_features(&a, &b, &MaskMap::ones(1, 1, 2)).unwrap(), b);
    assert_eq!(compose_features(&a, &b, &MaskMap::zeros(1, 1, 2)).unwrap(), a);
    let half = MaskMap::new(Tensor::full(&[1, 1, 1, 2], 0.5)).unwrap();
    assert_eq!(compose_features(&a, &b, &half).unwrap().data(), &[3.0, 4.0, 5.0, 6.5]);
}

proptest! {
    #[test]
    fn compose_is_bounded(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[1, 3, 4, 5], -5.0, 5.0);
        let b = random(&mut rng, &[1, 3, 4, 5], -5.0, 5.0);
        let m = MaskMap::new(random(&mut rng, &[1, 1, 4, 5], 0.0, 1.0)).unwrap();
        let c = compose_features(&a, &b, &m).unwrap();
        for i in 0..c.len() {
            let (lo, hi) = (a.data()[i].min(b.data()[i]), a.data()[i].max(b.data()[i]));
            prop_assert!(c.data()[i] >= lo - 1e-12 && c.data()[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn losses_are_non_negative(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
        let s = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
        let f = FlowField::new(random(&mut rng, &[1, 2, 4, 4], -2.0, 2.0)).unwrap();
        let m = MaskMap::new(random(&mut rng, &[1, 1, 4, 4], 0.0, 1.0)).unwrap();
        prop_assert!(loss_coherence(&o, &s, &f, &m).unwrap() >= 0.0);
        prop_assert!(loss_occlusion(&o, &s, &m).unwrap() >= 0.0);
        prop_assert!(loss_flow(&f, &FlowField::zeros(1, 4, 4)).unwrap() >= 0.0);
        prop_assert!(stability_error(&o, &s, &f, &m).unwrap() >= 0.0);
    }
}

#[test]
fn coherence_zero_cases_and_hand_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
    let flow = FlowField::constant(1, 4, 4, 1.0, 0.0);
    let o = warp_features(&s, &flow).unwrap();
    assert_eq!(loss_coherence(&o, &s, &flow, &MaskMap::ones(1, 4, 4)).unwrap(), 0.0);
    let other = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
    assert_eq!(loss_coherence(&other, &s, &flow, &MaskMap::zeros(1, 4, 4)).unwrap(), 0.0);

    let o = t(&[1, 1, 2, 2], &[0.5, 0.2, 0.9, 0.1]);
    let s = t(&[1, 1, 2, 2], &[0.1, 0.2, 0.3, 0.4]);
    let m = MaskMap::new(t(&[1, 1, 2, 2], &[1.0, 0.0, 1.0, 1.0])).unwrap();
    let expected = (0.4f64 * 0.4 + 0.6 * 0.6 + 0.3 * 0.3) / 4.0;
    let got = loss_coherence(&o, &s, &FlowField::zeros(1, 2, 2), &m).unwrap();
    assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
}

#[test]
fn occlusion_cases_and_complement_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let o = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
    let s = random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0);
    assert_eq!(loss_occlusion(&o, &s, &MaskMap::ones(1, 4, 4)).unwrap(), 0.0);
    let m = MaskMap::new(random(&mut rng, &[1, 1, 4, 4], 0.0, 1.0)).unwrap();
    assert_eq!(loss_occlusion(&o, &o, &m).unwrap(), 0.0);
    let occ = loss_occlusion(&o, &s, &m).unwrap();
    let via = loss_coherence(&o, &s, &FlowField::zeros(1, 4, 4), &m.complement()).unwrap();
    assert!((occ - via).abs() < 1e-15);

    let o = t(&[1, 1, 2, 2], &[0.5, 0.2, 0.9, 0.1]);
    let s = t(&[1, 1, 2, 2], &[0.1, 0.2, 0.3, 0.4]);
    let m = MaskMap::new(t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    let expected = 0.6f64 * 0.6 / 4.0;
    assert!((loss_occlusion(&o, &s, &m).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn flow_loss_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = FlowField::new(random(&mut rng, &[1, 2, 3, 5], -2.0, 2.0)).unwrap();
    assert_eq!(loss_flow(&a, &a).unwrap(), 0.0);
    let shifted = FlowField::new(a.tensor().zip_map(FlowField::constant(1, 3, 5, 1.0, 0.0).tensor(), |x, y| x + y).unwrap()).unwrap();
    assert!((loss_flow(&shifted, &a).unwrap() - 0.5).abs() < 1e-12);
    let b = FlowField::new(random(&mut rng, &[1, 2, 3, 5], -2.0, 2.0)).unwrap();
    let mut acc = 0.0;
    for i in 0..a.tensor().len() {
        let d = a.tensor().data()[i] - b.tensor().data()[i];
        acc += d * d;
    }
    assert!((loss_flow(&a, &b).unwrap() - acc / 30.0).abs() < 1e-14);
    assert!(loss_flow(&a, &FlowField::zeros(1, 6, 10)).is_err());
}

#[test]
fn total_is_weighted_sum() {
    let w = LossWeights::default();
    let ones = LossParts { coherence: 1.0, occlusion: 1.0, flow: 1.0 };
    assert_eq!(loss_total(&ones, &w), 120020.0);
    assert_eq!(loss_total(&LossParts { coherence: 0.0, occlusion: 0.0, flow: 0.0 }, &w), 0.0);
    let p = LossParts { coherence: 0.3, occlusion: 0.7, flow: 2.5 };
    let doubled = LossParts { coherence: 0.6, ..p };
    assert!((loss_total(&doubled, &w) - loss_total(&p, &w) - 1e5 * 0.3).abs() < 1e-9);
}

#[test]
fn stability_zero_for_static_coherent_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let o = random(&mut rng, &[1, 3, 8, 8], 0.0, 1.0);
    assert_eq!(stability_error(&o, &o, &FlowField::zeros(1, 8, 8), &MaskMap::ones(1, 8, 8)).unwrap(), 0.0);
}

#[test]
fn stability_ignores_content_outside_mask_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let prev = random(&mut rng, &[1, 3, 6, 6], 0.0, 1.0);
    let flow = FlowField::constant(1, 6, 6, -1.0, 0.0);
    let warped = warp_features(&prev, &flow).unwrap();
    let mut md = vec![1.0; 36];
    for y in 0..6 {
        md[y * 6] = 0.0;
    }
    let mask = MaskMap::new(t(&[1, 1, 6, 6], &md)).unwrap();
    let mut cur = warped.into_data();
    for c in 0..3 {
        for y in 0..6 {
            cur[c * 36 + y * 6] = rng.gen();
        }
    }
    let cur = t(&[1, 3, 6, 6], &cur);
    assert_eq!(stability_error(&cur, &prev, &flow, &mask).unwrap(), 0.0);
}

#[test]
fn sequence_mean_is_arithmetic_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let outs: Vec<Tensor> = (0..4).map(|_| random(&mut rng, &[1, 3, 4, 4], 0.0, 1.0)).collect();
    let flows = vec![FlowField::zeros(1, 4, 4); 3];
    let masks = vec![MaskMap::ones(1, 4, 4); 3];
    let r = stability_error_sequence(&outs, &flows, &masks).unwrap();
    assert_eq!(r.per_pair.len(), 3);
    assert!((r.mean - r.per_pair.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!(stability_error_sequence(&outs, &flows[..2], &masks[..2]).is_err());
}

#[test]
fn binary_mask_partitions_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let o = random(&mut rng, &[1, 3, 5, 5], 0.0, 1.0);
    let s = random(&mut rng, &[1, 3, 5, 5], 0.0, 1.0);
    let md: Vec<f64> = (0..25).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let m = MaskMap::new(t(&[1, 1, 5, 5], &md)).unwrap();
    let zero = FlowField::zeros(1, 5, 5);
    let cohe = loss_coherence(&o, &s, &zero, &m).unwrap();
    let occ = loss_occlusion(&o, &s, &m).unwrap();
    let full = loss_coherence(&o, &s, &zero, &MaskMap::ones(1, 5, 5)).unwrap();
    assert!((cohe + occ - full).abs() < 1e-14);
}
