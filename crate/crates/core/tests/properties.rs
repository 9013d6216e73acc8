mod common;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Rotation3, Vector2, Vector3};
use proptest::prelude::*;
use scalekit::dataio;
use scalekit::depth_calib::{
    apply_policy, fit_scene_scale, reliability_partition, unreliable_count, CalibrationPolicy, DepthPairSample,
    FitSpace, PolicyMode, SceneCalibration,
};
use scalekit::flow_metrics::{sfc_from_masks, MaskSource};
use scalekit::geometry::{
    fundamental_between, relative_pose, scale_translation, symmetric_epipolar_distance, Camera, Intrinsics, PixelMatch,
    Pose,
};
use scalekit::grid::{Grid, Mask};
use scalekit::scale_opt::{dscale_dbeta, scale_from_beta};

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.5f64..1.5), prop::array::uniform3(-3.0f64..3.0))
        .prop_map(|(axis, t)| Pose::new(Rotation3::new(Vector3::from(axis)).into_inner(), Vector3::from(t)).unwrap())
}

fn depth_samples() -> impl Strategy<Value = Vec<DepthPairSample>> {
    prop::collection::vec((0.05f64..50.0, 0.05f64..50.0), 1..30).prop_map(|v| {
        v.into_iter()
            .map(|(s, m)| DepthPairSample {
                sparse_depth: s,
                mono_depth: m,
            })
            .collect()
    })
}

fn calibrations() -> impl Strategy<Value = Vec<SceneCalibration>> {
    prop::collection::btree_map("[a-z]{1,6}", prop_oneof![Just(0.5f64), 0.0f64..1.0], 1..25).prop_map(|m| {
        m.into_iter()
            .map(|(id, v)| SceneCalibration {
                id,
                alpha: 1.5,
                residual_variance: v,
                sample_count: 10,
                reliable: None,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn relative_pose_to_self_is_identity(p in pose()) {
        let r = relative_pose(&p, &p);
        prop_assert!((r.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!(r.translation.norm() < 1e-12);
    }

    #[test]
    fn scale_translation_keeps_rotation(p in pose(), s in 0.01f64..100.0) {
        let cam = Camera::new(Intrinsics::centered(64, 1.0), p);
        let scaled = scale_translation(&cam, s).unwrap();
        prop_assert_eq!(scaled.pose.rotation, cam.pose.rotation);
    }

    #[test]
    fn sed_is_symmetric(a in pose(), b in pose(), p1 in prop::array::uniform2(0.0f64..64.0), p2 in prop::array::uniform2(0.0f64..64.0)) {
        let k = Intrinsics::centered(64, 1.0);
        let f = fundamental_between(&Camera::new(k, a), &Camera::new(k, b));
        let m = PixelMatch::new(Vector2::from(p1), Vector2::from(p2));
        let d = symmetric_epipolar_distance(&f, &m);
        let d_swapped = symmetric_epipolar_distance(&f.transpose(), &m.swapped());
        prop_assert!(d >= 0.0);
        prop_assert!((d - d_swapped).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn scale_range_is_bounded(beta in -10.0f64..10.0, a in 0.01f64..3.0) {
        let s = scale_from_beta(beta, a);
        prop_assert!(s.is_finite() && s >= (-a).exp() && s <= a.exp());
        if beta.abs() < 0.999 {
            let h = 1e-6;
            let fd = (scale_from_beta(beta + h, a) - scale_from_beta(beta - h, a)) / (2.0 * h);
            prop_assert!((dscale_dbeta(beta, a) - fd).abs() <= 1e-4 * fd.abs());
        }
    }

    #[test]
    fn alpha_is_equivariant(samples in depth_samples(), c in 0.01f64..100.0) {
        let base = fit_scene_scale(&samples, FitSpace::Linear).unwrap().alpha;
        let mono: Vec<_> = samples.iter().map(|p| DepthPairSample { mono_depth: p.mono_depth * c, ..*p }).collect();
        let sparse: Vec<_> = samples.iter().map(|p| DepthPairSample { sparse_depth: p.sparse_depth * c, ..*p }).collect();
        let up = fit_scene_scale(&mono, FitSpace::Linear).unwrap().alpha;
        let down = fit_scene_scale(&sparse, FitSpace::Linear).unwrap().alpha;
        prop_assert!((up - base * c).abs() <= 1e-12 * base * c);
        prop_assert!((down - base / c).abs() <= 1e-12 * base / c);
    }

    #[test]
    fn partition_ignores_input_order(calibs in calibrations(), fraction in 0.05f64..0.95, shift in 0usize..25) {
        let a = reliability_partition(&calibs, fraction).unwrap();
        let mut rotated = calibs.clone();
        let n = rotated.len();
        rotated.rotate_left(shift % n);
        rotated.reverse();
        prop_assert_eq!(&reliability_partition(&rotated, fraction).unwrap(), &a);
        let flagged = a.iter().filter(|c| c.reliable == Some(false)).count();
        prop_assert_eq!(flagged, unreliable_count(n, fraction));
    }

    #[test]
    fn policies_preserve_or_trim_exactly(calibs in calibrations(), fraction in 0.05f64..0.95) {
        let flagged = reliability_partition(&calibs, fraction).unwrap();
        let bad = flagged.iter().filter(|c| c.reliable == Some(false)).count();
        let fb = CalibrationPolicy { mode: PolicyMode::FallbackOne, unreliable_fraction: fraction };
        let (scales, kept) = apply_policy(&flagged, &fb).unwrap();
        prop_assert_eq!(kept.len(), calibs.len());
        prop_assert_eq!(scales.values().filter(|s| **s == 1.0).count(), bad);
        let trim = CalibrationPolicy { mode: PolicyMode::Trim, unreliable_fraction: fraction };
        let (scales, kept) = apply_policy(&flagged, &trim).unwrap();
        prop_assert_eq!(kept.len(), calibs.len() - bad);
        prop_assert_eq!(scales.len(), kept.len());
    }

    #[test]
    fn sfc_ignores_sample_order_and_flow_scale(
        flows in prop::collection::vec(prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 16), 2..7),
        c in 0.1f64..10.0,
    ) {
        let grids: Vec<_> = flows
            .iter()
            .map(|v| Grid::from_vec(4, 4, v.iter().map(|&(x, y)| Vector2::new(x, y)).collect()).unwrap())
            .collect();
        let full: Mask = Grid::filled(4, 4, true);
        let masks = vec![full.clone(); grids.len()];
        let Ok(base) = sfc_from_masks(&grids, masks.clone(), full.clone(), MaskSource::Consensus) else {
            return Ok(());
        };
        let mut reversed = grids.clone();
        reversed.reverse();
        let r = sfc_from_masks(&reversed, masks.clone(), full.clone(), MaskSource::Consensus).unwrap();
        prop_assert!((r.sfc - base.sfc).abs() <= 1e-12);
        let scaled: Vec<_> = grids.iter().map(|g| g.scaled(c)).collect();
        let r = sfc_from_masks(&scaled, masks, full, MaskSource::Consensus).unwrap();
        prop_assert!((r.sfc - base.sfc).abs() <= 1e-12 * base.sfc.max(1.0));
    }

    #[test]
    fn png16_round_trip_is_within_quantization(g in common::scalar_grid()) {
        let clamped = g.map(|v| v.clamp(0.0, 1.0));
        let back = dataio::decode_png(&dataio::encode_png(&clamped, dataio::PngDepth::Sixteen).unwrap()).unwrap();
        prop_assert!(common::max_abs_diff(&clamped, &back) <= 0.5 / 65535.0 + 1e-12);
    }

    #[test]
    fn depth_pair_csv_round_trips(rows in prop::collection::vec((0usize..100, 1e-3f64..1e3, 1e-3f64..1e3), 0..20)) {
        let rows: Vec<_> = rows
            .into_iter()
            .map(|(v, s, m)| (v, DepthPairSample { sparse_depth: s, mono_depth: m }))
            .collect();
        prop_assert_eq!(dataio::parse_depth_pairs_csv(&dataio::depth_pairs_csv(&rows)).unwrap(), rows);
    }
}

#[test]
fn optimizer_is_deterministic_and_monotone_on_average() {
    use scalekit::protocol::photometric_objective;
    use scalekit::scale_opt::{optimize_scales, OptimizerConfig, ScaleObjective, ScaleParam, ScaleSet};
    use scalekit::synth::{make_sequences, SceneSpec, TrajectorySpec};

    let k = Intrinsics::centered(40, 60f64.to_radians());
    let seqs = make_sequences(6, 77, &SceneSpec::default(), &TrajectorySpec::default(), k).unwrap();
    let mut shuffled = seqs.clone();
    shuffled.reverse();
    let cfg = OptimizerConfig {
        epochs: 400,
        batch_size: 4,
        seed: 77,
        ..OptimizerConfig::default()
    };
    let run = |s: &[_]| {
        let obj = photometric_objective(s, &[0.2], 3).unwrap();
        let init = ScaleSet::uniform(obj.scene_ids(), ScaleParam::default());
        optimize_scales(&obj, &init, &cfg, &BTreeSet::new()).unwrap()
    };
    let (a, ha) = run(&seqs);
    let (b, hb) = run(&seqs);
    let (c, _) = run(&shuffled);
    assert_eq!(ha, hb);
    assert_eq!(a, b);
    let sa: BTreeMap<_, _> = a.scales();
    for (id, s) in c.scales() {
        assert!((s - sa[&id]).abs() < 1e-9, "{id}");
    }
    let ma = |i: usize| ha.losses[i..i + 10].iter().sum::<f64>() / 10.0;
    assert!(ma(ha.losses.len() - 10) <= ma(0));
}
