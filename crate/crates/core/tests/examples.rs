#[path = "../examples/depth_calibration.rs"]
mod depth_calibration;
#[path = "../examples/edge_heatmap.rs"]
mod edge_heatmap;
#[path = "../examples/file_formats.rs"]
mod file_formats;
#[path = "../examples/geometry_epipolar.rs"]
mod geometry_epipolar;
#[path = "../examples/scale_learning.rs"]
mod scale_learning;
#[path = "../examples/sfc_metric.rs"]
mod sfc_metric;
#[path = "../examples/ss_tsed_curve.rs"]
mod ss_tsed_curve;
#[path = "../examples/synth_dataset.rs"]
mod synth_dataset;

#[test]
fn geometry_example() {
    let (hand, exact) = geometry_epipolar::run_example();
    assert!((hand - 0.1).abs() < 1e-12);
    assert!(exact < 1e-9);
}

#[test]
fn sfc_example_orders_noise_levels() {
    let v = sfc_metric::run_example();
    assert!(v[0].1 < 1e-9);
    assert!(v.windows(2).all(|w| w[0].1 < w[1].1));
}

#[test]
fn ss_tsed_example() {
    let curves = ss_tsed_curve::run_example();
    assert!(curves[0].1.pct_all.iter().all(|&p| p == 100.0));
    let last = curves[0].1.thresholds.len() - 1;
    assert!(curves[2].1.pct_all[last] < curves[1].1.pct_all[last]);
}

#[test]
fn scale_learning_example_recovers() {
    assert!(scale_learning::run_example() < 0.05);
}

#[test]
fn depth_calibration_example() {
    assert_eq!(depth_calibration::run_example(), (10, 7));
}

#[test]
fn synth_dataset_example() {
    assert_eq!(synth_dataset::run_example(), 3);
}

#[test]
fn file_formats_example() {
    assert!(file_formats::run_example());
}

#[test]
fn heatmap_example_runs() {
    let v = edge_heatmap::run_example();
    assert!(v.iter().all(|(_, h)| h.is_finite() && *h > 0.0));
    assert!(v[1].1 > v[0].1);
}
