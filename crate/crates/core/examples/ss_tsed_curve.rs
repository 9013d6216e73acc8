//! Scale-sensitive TSED: pairs of views generated along different axes
//! from one conditioning view, scored against nominal epipolar geometry.

use scalekit::geometry::Intrinsics;
use scalekit::synth::{make_sequences, GeneratorSim, SceneSpec, TrajectorySpec};
use scalekit::tsed::{ss_tsed_protocol, SsTsedCurve, SynthPairSampler, TsedConfig};

pub fn run_example() -> Vec<(f64, SsTsedCurve)> {
    let k = Intrinsics::centered(128, 60f64.to_radians());
    let seqs = make_sequences(6, 5, &SceneSpec::default(), &TrajectorySpec::default(), k).unwrap();
    let cfg = TsedConfig::default();
    let mut out = Vec::new();
    for sigma in [0.0, 0.3, 0.6] {
        let sampler = SynthPairSampler {
            sequences: &seqs,
            generator: GeneratorSim::new(sigma, 5).unwrap(),
            matches_per_pair: 100,
        };
        let curve = ss_tsed_protocol(&sampler, &cfg, 15, 5).unwrap();
        let n = curve.thresholds.len();
        println!(
            "sigma {sigma:<4} consistent: {:5.1}% at {:.2} px, {:5.1}% at {:.2} px  (xy {:.0}% xz {:.0}% yz {:.0}%)",
            curve.pct_all[0],
            curve.thresholds[0],
            curve.pct_all[n - 1],
            curve.thresholds[n - 1],
            curve.pct_xy[n - 1],
            curve.pct_xz[n - 1],
            curve.pct_yz[n - 1],
        );
        out.push((sigma, curve));
    }
    out
}

#[allow(dead_code)]
fn main() {
    run_example();
}
