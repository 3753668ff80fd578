use vidstyle::coherence::{FlowField, MaskMap};
use vidstyle::groundtruth::MotionKind;
use vidstyle::io::encode_bundle;
use vidstyle::{ModelBundle, SplitLayer, Tensor};
use vidstyle_web::{downsample_mask, flow_rgba, mask_rgba, stability, to_rgba, Demo, Scene};

#[test]
fn rgba_layout() {
    let gray = Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.5]).unwrap();
    assert_eq!(to_rgba(&gray), vec![0, 0, 0, 255, 255, 255, 255, 255]);
    let rgb = Tensor::new(vec![1, 3, 1, 1], vec![1.0, 0.5, 0.0]).unwrap();
    assert_eq!(to_rgba(&rgb), vec![255, 128, 0, 255]);
}

#[test]
fn flow_colors() {
    let t = Tensor::new(vec![1, 2, 1, 2], vec![0.0, 3.0, 0.0, 0.0]).unwrap();
    let rgba = flow_rgba(&FlowField::new(t).unwrap(), None);
    assert_eq!(&rgba[..4], &[255, 255, 255, 255]);
    assert_eq!(&rgba[4..], &[255, 0, 0, 255]);
    let m = MaskMap::new(Tensor::new(vec![1, 1, 1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
    assert_eq!(mask_rgba(&m), vec![255, 255, 255, 255, 200, 40, 40, 255]);
}

#[test]
fn downsample_keeps_any_occlusion() {
    let mut d = vec![1.0; 16];
    d[5] = 0.0;
    let m = MaskMap::new(Tensor::new(vec![1, 1, 4, 4], d).unwrap()).unwrap();
    let small = downsample_mask(&m, 2, 2);
    assert_eq!(small.tensor().data(), &[0.0, 1.0, 1.0, 1.0]);
}

#[test]
fn warp_preview_is_accurate_where_visible() {
    let scene = Scene::generate(4, 48, 2, MotionKind::Constant).unwrap();
    for pair in 0..scene.clip.pairs() {
        let p = scene.warp_preview(pair).unwrap();
        assert!(p.visible_error <= p.full_error);
        assert!(p.visible_error < 2e-3, "pair {pair}: {}", p.visible_error);
        assert_eq!(p.error_rgba.len(), 4 * 48 * 48);
    }
}

#[test]
fn thresholds_change_the_mask() {
    let mut demo = Demo::new(3, 48, 2, "mixed").unwrap();
    let default = demo.visible_fraction(0).unwrap();
    demo.set_thresholds(0.01, 0.5, 1e6, 1e6).unwrap();
    let no_boundaries = demo.visible_fraction(0).unwrap();
    assert!(no_boundaries >= default);
    demo.set_thresholds(0.0, 0.0, 0.0, 0.0).unwrap();
    assert!(demo.visible_fraction(0).unwrap() <= default);
    assert_eq!(demo.mask_rgba(0).unwrap().len(), 4 * 48 * 48);
    assert_eq!(demo.warp_rgba(0).unwrap().len(), 2 * 4 * 48 * 48);
}

#[test]
fn oracle_propagation_is_more_stable_than_baseline() {
    let scene = Scene::generate(11, 48, 2, MotionKind::Constant).unwrap();
    let r = stability(&scene.clip, None, SplitLayer::R1_4E, 5).unwrap();
    assert_eq!(r.baseline[0], r.coherent[0]);
    assert!(r.coherent_error < r.baseline_error, "{} vs {}", r.coherent_error, r.baseline_error);
}

#[test]
fn demo_runs_with_uploaded_model() {
    let mut demo = Demo::new(2, 32, 1, "constant").unwrap();
    let bytes = encode_bundle(&ModelBundle::with_defaults(SplitLayer::R1_2E, 9).unwrap()).unwrap();
    assert_eq!(demo.load_model(&bytes).unwrap(), "r1/2(E)");
    assert!(demo.has_model());
    let errs = demo.run_stability("r1/4(E)", 0).unwrap();
    assert!(errs.iter().all(|e| e.is_finite() && *e >= 0.0));
    assert_eq!(demo.stylized_rgba(demo.frames() - 1, true).len(), 4 * 32 * 32);
    assert_eq!(demo.frame_rgba(0).len(), 4 * 32 * 32);
    assert_eq!(demo.flow_rgba(0).len(), 4 * 32 * 32);
}
