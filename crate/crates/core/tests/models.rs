use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidstyle::models::{
    flow_predict, mask_predict, style_decode, style_encode, Component, FlowNetSpec, InitScheme, MaskNetSpec,
    ModelBundle, SplitLayer, StyleNetSpec,
};
use vidstyle::{Error, Tensor};

fn frame(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * h * w).map(|_| rng.gen::<f64>()).collect();
    Tensor::new(vec![1, 3, h, w], data).unwrap()
}

fn bundle(split: SplitLayer, scheme: InitScheme) -> ModelBundle {
    let style = StyleNetSpec { split, ..StyleNetSpec::default() };
    ModelBundle::init(style, FlowNetSpec::default(), MaskNetSpec::default(), 11, scheme).unwrap()
}

#[test]
fn quarter_split_feature_shape() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let f = style_encode(&b, &frame(1, 64, 64)).unwrap();
    assert_eq!(f.shape(), &[1, 32, 16, 16]);
}

#[test]
fn shape_round_trip_for_every_split() {
    let x = frame(2, 32, 24);
    for split in SplitLayer::ALL {
        let b = bundle(split, InitScheme::HeNormal);
        let f = style_encode(&b, &x).unwrap();
        assert_eq!(f.shape()[1], b.style_spec().feature_channels(), "{split}");
        assert_eq!(f.shape()[2], 32 / split.downscale(), "{split}");
        let y = style_decode(&b, &f).unwrap();
        assert_eq!(y.shape(), x.shape(), "{split}");
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn zero_weights_give_trivial_outputs() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::Zeros);
    let x = frame(3, 32, 32);
    let f = style_encode(&b, &x).unwrap();
    assert!(f.data().iter().all(|&v| v == 0.0));
    let flow = flow_predict(&b, &x, &frame(4, 32, 32)).unwrap();
    assert_eq!(flow.shape(), &[1, 2, 8, 8]);
    assert!(flow.data().iter().all(|&v| v == 0.0));
    let m = mask_predict(&b, &Tensor::ones(&[1, 32, 8, 8])).unwrap();
    assert_eq!(m.shape(), &[1, 1, 8, 8]);
    assert!(m.data().iter().all(|&v| v == 0.5));
}

#[test]
fn mask_is_single_channel_and_open_interval() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let d = frame(5, 8, 8).map(|v| v * 3.0);
    let d = Tensor::stack_batch(&[d]).unwrap();
    // 3 channels does not match the 32-channel split
    assert!(matches!(mask_predict(&b, &d), Err(Error::Shape { .. })));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let delta = Tensor::new(vec![1, 32, 6, 7], (0..32 * 42).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let m = mask_predict(&b, &delta).unwrap();
    assert_eq!(m.shape(), &[1, 1, 6, 7]);
    assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn encode_rejects_indivisible_frames() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let err = style_encode(&b, &frame(7, 30, 32)).unwrap_err();
    assert!(err.to_string().contains("divisible by the encoder stride 4"), "{err}");
}

#[test]
fn flow_rejects_mismatched_frames() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    assert!(flow_predict(&b, &frame(1, 32, 32), &frame(2, 40, 32)).is_err());
}

#[test]
fn decode_is_deterministic_and_identical_frames_encode_identically() {
    let b1 = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let b2 = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let x = frame(8, 32, 32);
    let f1 = style_encode(&b1, &x).unwrap();
    assert_eq!(f1, style_encode(&b1, &x.clone()).unwrap());
    assert_eq!(style_decode(&b1, &f1).unwrap(), style_decode(&b2, &f1).unwrap());
}

#[test]
fn mask_broadcast_scales_every_channel() {
    let mut g = vidstyle::Graph::new();
    let m = g.constant(Tensor::new(vec![1, 1, 1, 2], vec![0.25, 2.0]).unwrap());
    let f = g.constant(Tensor::new(vec![1, 2, 1, 2], vec![1.0, 1.0, 4.0, 4.0]).unwrap());
    let y = g.mul(m, f).unwrap();
    assert_eq!(g.value(y).data(), &[0.25, 2.0, 1.0, 8.0]);
}

#[test]
fn component_mixing_requires_matching_split() {
    let a = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let other = ModelBundle::init(
        StyleNetSpec::default(),
        FlowNetSpec::default(),
        MaskNetSpec::default(),
        99,
        InitScheme::HeNormal,
    )
    .unwrap();
    let mixed = ModelBundle::with_components(&a, &other).unwrap();
    assert_eq!(mixed.params(Component::Style), a.params(Component::Style));
    assert_eq!(mixed.params(Component::Flow), other.params(Component::Flow));
    let c = bundle(SplitLayer::R1_2E, InitScheme::HeNormal);
    assert!(matches!(ModelBundle::with_components(&c, &other), Err(Error::SpecMismatch(_))));
}

#[test]
fn random_style_output_is_not_saturated() {
    let b = bundle(SplitLayer::R1_4E, InitScheme::HeNormal);
    let y = style_decode(&b, &style_encode(&b, &frame(9, 48, 48)).unwrap()).unwrap();
    let sat = y.data().iter().filter(|&&v| !(0.02..=0.98).contains(&v)).count();
    assert!(sat * 10 < y.len(), "{sat} of {} saturated", y.len());
}
