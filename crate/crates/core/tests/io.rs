use std::path::Path;

use proptest::prelude::*;
use vidstyle::coherence::{FlowField, MaskMap};
use vidstyle::groundtruth::{synth_clip, SynthConfig};
use vidstyle::io::{
    decode_bundle, decode_flo, decode_pnm, encode_bundle, encode_flo, encode_pnm, load_bundle, read_clip, read_flo,
    save_bundle, take_specs, write_clip, write_flo, put_specs, KeyValues, MANIFEST_FILE,
};
use vidstyle::models::{style_encode, Component, FlowNetSpec, FlowStage, MaskNetSpec, StyleNetSpec};
use vidstyle::{Error, ModelBundle, SplitLayer, Tensor};

fn p() -> &'static Path {
    Path::new("mem")
}

fn flow_from(h: usize, w: usize, vals: &[f32]) -> FlowField {
    FlowField::new(Tensor::new(vec![1, 2, h, w], vals.iter().map(|&v| v as f64).collect()).unwrap()).unwrap()
}

#[test]
fn flo_single_pixel_layout() {
    let f = flow_from(1, 1, &[0.5, -0.25]);
    let b = encode_flo(&f).unwrap();
    assert_eq!(b.len(), 20);
    assert_eq!(&b[..4], b"PIEH");
    assert_eq!(&b[4..8], &1i32.to_le_bytes());
    assert_eq!(&b[8..12], &1i32.to_le_bytes());
    assert_eq!(&b[12..16], &0.5f32.to_le_bytes());
    assert_eq!(&b[16..20], &(-0.25f32).to_le_bytes());
}

#[test]
fn flo_interleaves_row_major() {
    // u plane then v plane in memory, (u, v) pairs on disk
    let f = flow_from(1, 2, &[1.0, 2.0, 10.0, 20.0]);
    let b = encode_flo(&f).unwrap();
    let floats: Vec<f32> = b[12..].chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(floats, [1.0, 10.0, 2.0, 20.0]);
}

#[test]
fn flo_rejects_bad_files_with_offsets() {
    let good = encode_flo(&flow_from(2, 3, &[0.25; 12])).unwrap();
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(decode_flo(&bad, p()), Err(Error::Parse { offset: 0, .. })));
    for n in 0..good.len() {
        assert!(matches!(decode_flo(&good[..n], p()), Err(Error::Parse { .. })), "len {n}");
    }
    let mut long = good.clone();
    long.push(0);
    assert!(matches!(decode_flo(&long, p()), Err(Error::Parse { offset: 60, .. })));
    let mut nan = good.clone();
    nan[12 + 4 * 5..12 + 4 * 6].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_flo(&nan, p()), Err(Error::Parse { offset: 32, .. })));
    let mut neg = good;
    neg[4..8].copy_from_slice(&(-3i32).to_le_bytes());
    assert!(matches!(decode_flo(&neg, p()), Err(Error::Parse { offset: 4, .. })));
}

#[test]
fn flo_file_round_trip_and_missing_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.flo");
    let f = flow_from(2, 2, &[1.5, -2.0, 0.0, 3.25, 7.0, 0.125, -0.5, 9.0]);
    write_flo(&f, &path).unwrap();
    assert_eq!(read_flo(&path).unwrap(), f);
    let missing = dir.path().join("nope.flo");
    let err = read_flo(&missing).unwrap_err();
    assert!(err.to_string().contains("nope.flo"));
}

proptest! {
    #[test]
    fn flo_round_trip_is_bit_exact(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f32> = (0..2 * h * w).map(|_| rng.gen_range(-50.0f32..50.0)).collect();
        let f = flow_from(h, w, &vals);
        let bytes = encode_flo(&f).unwrap();
        let back = decode_flo(&bytes, p()).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(encode_flo(&back).unwrap(), bytes);
    }

    #[test]
    fn image_round_trip_within_quantization(h in 1usize..5, w in 1usize..5, c in prop::sample::select(vec![1usize, 3]), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::new(vec![1, c, h, w], (0..c * h * w).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let back = decode_pnm(&encode_pnm(&t).unwrap(), p()).unwrap();
        prop_assert!(back.max_abs_diff(&t) <= 0.5 / 255.0 + 1e-12);
        let again = decode_pnm(&encode_pnm(&back).unwrap(), p()).unwrap();
        prop_assert_eq!(again, back);
    }
}

#[test]
fn image_quantization_rules() {
    let zeros = Tensor::zeros(&[1, 3, 2, 2]);
    let b = encode_pnm(&zeros).unwrap();
    assert_eq!(&b[..11], b"P6\n2 2\n255\n");
    assert!(b[11..].iter().all(|&v| v == 0));
    assert_eq!(b.len(), 11 + 12);
    let half = encode_pnm(&Tensor::full(&[1, 1, 1, 1], 0.5)).unwrap();
    assert_eq!(*half.last().unwrap(), 128);
    assert_eq!(vidstyle::io::quantize(1.0), 255);
    assert!(encode_pnm(&Tensor::full(&[1, 1, 1, 1], 1.5)).is_err());
    assert!(encode_pnm(&Tensor::zeros(&[1, 2, 1, 1])).is_err());
}

#[test]
fn image_header_parsing() {
    let t = decode_pnm(b"P5 # comment\n2 1\n# more\n255\n\x00\xff", p()).unwrap();
    assert_eq!(t.data(), &[0.0, 1.0]);
    let low = decode_pnm(b"P5\n1 1\n15\n\x0f", p()).unwrap();
    assert_eq!(low.data(), &[1.0]);
    for bad in [&b"P3\n1 1\n255\n\x00"[..], b"P5\n0 1\n255\n", b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n255\n\x00\x00", b"P5\n1 1\n10\n\x0b"] {
        assert!(matches!(decode_pnm(bad, p()), Err(Error::Parse { .. })), "{bad:?}");
    }
}

#[test]
fn kv_rejects_unknown_and_duplicate_keys() {
    let mut kv = KeyValues::parse("# c\na = 1\n\nb=x\n", p()).unwrap();
    assert_eq!(kv.take::<u32>("a").unwrap(), Some(1));
    match kv.finish() {
        Err(Error::Parse { offset, msg, .. }) => {
            assert_eq!(offset, 11);
            assert!(msg.contains("\"b\""));
        }
        other => panic!("{other:?}"),
    }
    assert!(KeyValues::parse("a=1\na=2\n", p()).is_err());
    assert!(KeyValues::parse("novalue\n", p()).is_err());
    let mut kv = KeyValues::parse("a=zz\n", p()).unwrap();
    assert!(kv.take::<u32>("a").is_err());
}

#[test]
fn specs_round_trip_through_text() {
    let style = StyleNetSpec { res_blocks: 2, split: SplitLayer::R1_2D, ..StyleNetSpec::default() };
    let flow = FlowNetSpec {
        contract: vec![FlowStage { width: 8, stride: 2 }, FlowStage { width: 12, stride: 2 }, FlowStage { width: 12, stride: 2 }],
        expand_width: 6,
        flow_scale: 0.3,
    };
    let mask = MaskNetSpec { widths: [4, 5, 1], kernel: 5 };
    let mut kv = KeyValues::new();
    put_specs(&mut kv, &style, &flow, &mask);
    let mut back = KeyValues::parse(&kv.to_text(), p()).unwrap();
    assert_eq!(take_specs(&mut back).unwrap(), (style, flow, mask));
    back.finish().unwrap();
}

fn trained_like(seed: u64, split: SplitLayer) -> ModelBundle {
    let mut b = ModelBundle::with_defaults(split, seed).unwrap();
    b.freeze.flow = true;
    b
}

#[test]
fn archive_round_trip_is_bit_exact() {
    let b = trained_like(5, SplitLayer::R1_2E);
    let bytes = encode_bundle(&b).unwrap();
    assert_eq!(encode_bundle(&b).unwrap(), bytes);
    let back = decode_bundle(&bytes, p()).unwrap();
    assert_eq!(back, b);
    let frame = synth_clip(&SynthConfig { height: 16, width: 16, frames: 2, ..SynthConfig::default() }, 0).unwrap().frames[0].clone();
    assert_eq!(style_encode(&back, &frame).unwrap(), style_encode(&b, &frame).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.vsw");
    save_bundle(&b, &path).unwrap();
    assert_eq!(load_bundle(&path).unwrap(), b);
}

#[test]
fn archive_rejects_corruption() {
    let bytes = encode_bundle(&trained_like(1, SplitLayer::R1_4E)).unwrap();
    let step = (bytes.len() / 97).max(1);
    for i in (12..bytes.len()).step_by(step) {
        let mut bad = bytes.clone();
        bad[i] ^= 0x40;
        assert!(matches!(decode_bundle(&bad, p()), Err(Error::Checksum { .. })), "byte {i}");
    }
    for n in (0..bytes.len()).step_by(step) {
        assert!(decode_bundle(&bytes[..n], p()).is_err(), "len {n}");
    }
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(decode_bundle(&v2, p()), Err(Error::Version { found: 2, expected: 1 })));
    let mut magic = bytes;
    magic[1] = b'X';
    assert!(matches!(decode_bundle(&magic, p()), Err(Error::Parse { offset: 0, .. })));
}

#[test]
fn archive_refuses_non_f32_values() {
    let b = ModelBundle::with_defaults(SplitLayer::R1_4E, 0).unwrap();
    let mut style = b.params(Component::Style).clone();
    style.tensors[0] = style.tensors[0].map(|v| v + 1e-12);
    let odd = ModelBundle::from_parts(
        b.style_spec().clone(),
        b.flow_spec().clone(),
        b.mask_spec().clone(),
        style,
        b.params(Component::Flow).clone(),
        b.params(Component::Mask).clone(),
        b.freeze,
    )
    .unwrap();
    assert!(encode_bundle(&odd).is_err());
}

#[test]
fn archive_components_combine_when_specs_match() {
    let a = decode_bundle(&encode_bundle(&trained_like(1, SplitLayer::R1_4E)).unwrap(), p()).unwrap();
    let b = decode_bundle(&encode_bundle(&trained_like(2, SplitLayer::R1_4E)).unwrap(), p()).unwrap();
    let mixed = ModelBundle::with_components(&a, &b).unwrap();
    assert_eq!(mixed.params(Component::Style), a.params(Component::Style));
    assert_eq!(mixed.params(Component::Flow), b.params(Component::Flow));
    let c = decode_bundle(&encode_bundle(&trained_like(3, SplitLayer::R1_2E)).unwrap(), p()).unwrap();
    assert!(matches!(ModelBundle::with_components(&a, &c), Err(Error::SpecMismatch(_))));
}

#[test]
fn clip_directory_round_trip() {
    let cfg = SynthConfig { height: 16, width: 24, frames: 3, ..SynthConfig::default() };
    let clip = synth_clip(&cfg, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_clip(&clip, dir.path()).unwrap();
    let back = read_clip(dir.path()).unwrap();
    assert_eq!(back.config, clip.config);
    assert_eq!(back.seed, 11);
    assert_eq!(back.gt_masks, clip.gt_masks);
    for (a, b) in back.gt_flows.iter().zip(&clip.gt_flows) {
        assert_eq!(a.tensor(), &b.tensor().map(|v| v as f32 as f64));
    }
    for (a, b) in back.frames.iter().zip(&clip.frames) {
        assert!(a.max_abs_diff(b) <= 0.5 / 255.0 + 1e-12);
    }
    let mask_bytes = std::fs::read(dir.path().join("mask_0001.pgm")).unwrap();
    let header = b"P5\n24 16\n255\n".len();
    assert!(mask_bytes[header..].iter().all(|&v| v == 0 || v == 255));

    let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    std::fs::write(dir.path().join(MANIFEST_FILE), format!("{manifest}bogus=1\n")).unwrap();
    assert!(matches!(read_clip(dir.path()), Err(Error::Parse { .. })));
    std::fs::write(dir.path().join(MANIFEST_FILE), manifest.replace("frame_0002.ppm", "../frame_0002.ppm")).unwrap();
    assert!(read_clip(dir.path()).is_err());
    std::fs::write(dir.path().join(MANIFEST_FILE), &manifest).unwrap();
    std::fs::remove_file(dir.path().join("flow_0002.flo")).unwrap();
    let err = read_clip(dir.path()).unwrap_err();
    assert!(err.to_string().contains("flow_0002.flo"), "{err}");
}

#[test]
fn mask_pgm_round_trip() {
    let m = MaskMap::new(Tensor::new(vec![1, 1, 1, 3], vec![0.0, 1.0, 1.0]).unwrap()).unwrap();
    let b = encode_pnm(m.tensor()).unwrap();
    assert_eq!(&b[b.len() - 3..], &[0, 255, 255]);
}
