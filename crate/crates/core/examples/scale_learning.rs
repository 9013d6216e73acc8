//! Learning per-scene scales by gradient descent on a photometric warp loss,
//! starting from s = 1 for every scene.

use std::collections::BTreeSet;

use scalekit::geometry::Intrinsics;
use scalekit::protocol::{photometric_objective, recovery_stats};
use scalekit::scale_opt::{delta_scales, optimize_scales, OptimizerConfig, ScaleObjective, ScaleParam, ScaleSet};
use scalekit::synth::{make_sequences, SceneSpec, TrajectorySpec};

pub fn run_example() -> f64 {
    let k = Intrinsics::centered(48, 60f64.to_radians());
    let spec = SceneSpec {
        scale_range: ((-0.5f64).exp(), 0.5f64.exp()),
        ..SceneSpec::default()
    };
    let seqs = make_sequences(4, 21, &spec, &TrajectorySpec::default(), k).unwrap();
    let objective = photometric_objective(&seqs, &[0.2], 4).unwrap();
    let init = ScaleSet::uniform(objective.scene_ids(), ScaleParam::default());
    let cfg = OptimizerConfig {
        epochs: 6000,
        batch_size: 2,
        seed: 21,
        ..OptimizerConfig::default()
    };
    let (learned, history) = optimize_scales(&objective, &init, &cfg, &BTreeSet::new()).unwrap();

    for seq in &seqs {
        let id = &seq.scene.id;
        println!(
            "{id}: planted {:.4}  learned {:.4}",
            seq.scene.planted_scale,
            learned.scale(id).unwrap()
        );
    }
    let deltas = delta_scales(&history, 10).unwrap();
    let peak = deltas.iter().cloned().fold(0.0, f64::max);
    println!(
        "loss {:.3e} -> {:.3e}; delta-scales peak {:.2e}, final {:.2e}",
        history.losses[0],
        history.losses.last().unwrap(),
        peak,
        deltas.last().unwrap()
    );
    let planted = seqs
        .iter()
        .map(|s| (s.scene.id.clone(), s.scene.planted_scale))
        .collect();
    let stats = recovery_stats(&learned, &planted).unwrap();
    println!("max |log(s/s*)| = {:.2e}", stats.max_abs_log_error);
    stats.max_abs_log_error
}

#[allow(dead_code)]
fn main() {
    run_example();
}
