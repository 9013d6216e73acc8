//! Thresholded symmetric epipolar distance between two independently
//! generated views (SS-TSED): both views share one conditioning view and
//! are displaced along different world axes, so any per-sample disagreement
//! about scene scale bends the cross-view epipolar geometry.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    fundamental_between, scale_relative_motion, symmetric_epipolar_distance_with, Camera, PixelMatch, Pose,
    SedAggregation,
};
use crate::rng::{hash_str, keyed_rng};
use crate::stats::median;
use crate::synth::{correspondences, GeneratorSim, SceneSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsedError {
    #[error("invalid TSED config: {0}")]
    InvalidConfig(String),
    #[error("axis pair needs two distinct axes")]
    SameAxis,
    #[error("translation magnitude must be positive, got {0}")]
    NonPositiveMagnitude(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisPair {
    Xy,
    Xz,
    Yz,
}

impl AxisPair {
    pub const ALL: [AxisPair; 3] = [AxisPair::Xy, AxisPair::Xz, AxisPair::Yz];

    pub fn axes(self) -> (Axis, Axis) {
        match self {
            AxisPair::Xy => (Axis::X, Axis::Y),
            AxisPair::Xz => (Axis::X, Axis::Z),
            AxisPair::Yz => (Axis::Y, Axis::Z),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AxisPair::Xy => "xy",
            AxisPair::Xz => "xz",
            AxisPair::Yz => "yz",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// `n` evenly spaced values over `[lo, hi]`, both ends included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsedConfig {
    pub t_matches: usize,
    /// Ascending pixel thresholds on the median SED.
    pub t_error_sweep: Vec<f64>,
    pub translation_magnitude: f64,
    pub sed_aggregation: SedAggregation,
}

impl Default for TsedConfig {
    fn default() -> Self {
        Self {
            t_matches: 10,
            t_error_sweep: linspace(0.7, 1.0, 14),
            translation_magnitude: 0.2,
            sed_aggregation: SedAggregation::Mean,
        }
    }
}

impl TsedConfig {
    pub fn validate(&self) -> Result<(), TsedError> {
        let bad = |m: &str| Err(TsedError::InvalidConfig(m.to_string()));
        if self.t_matches == 0 {
            return bad("t_matches must be at least 1");
        }
        if self.t_error_sweep.is_empty() || !self.t_error_sweep.iter().all(|&t| t > 0.0 && t.is_finite()) {
            return bad("sweep must be non-empty with positive thresholds");
        }
        if self.t_error_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sweep must be strictly ascending");
        }
        if !(self.translation_magnitude > 0.0) || !self.translation_magnitude.is_finite() {
            return bad("translation magnitude must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub axis_pair: Option<AxisPair>,
    /// Median SED in pixels; infinite when there are no matches.
    pub median_sed: f64,
    pub match_count: usize,
    pub consistent_at: Vec<bool>,
}

pub fn tsed_pair(matches: &[PixelMatch], f: &Matrix3<f64>, cfg: &TsedConfig) -> PairVerdict {
    let seds: Vec<f64> = matches
        .iter()
        .map(|m| symmetric_epipolar_distance_with(f, m, cfg.sed_aggregation))
        .collect();
    let median_sed = median(&seds).unwrap_or(f64::INFINITY);
    let enough = matches.len() >= cfg.t_matches;
    PairVerdict {
        axis_pair: None,
        median_sed,
        match_count: matches.len(),
        consistent_at: cfg.t_error_sweep.iter().map(|&t| enough && median_sed < t).collect(),
    }
}

/// `cond` with its center moved by `±magnitude` along each world axis, one
/// random sign per camera. Rotation and intrinsics are copied.
pub fn axis_translation_cameras(
    cond: &Camera,
    axes: (Axis, Axis),
    magnitude: f64,
    rng: &mut impl Rng,
) -> Result<(Camera, Camera), TsedError> {
    if axes.0 == axes.1 {
        return Err(TsedError::SameAxis);
    }
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(TsedError::NonPositiveMagnitude(magnitude));
    }
    let mut shifted = |axis: Axis| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let delta = axis.unit() * (sign * magnitude);
        Camera::new(
            cond.intrinsics,
            Pose {
                rotation: cond.pose.rotation,
                translation: cond.pose.translation - cond.pose.rotation * delta,
            },
        )
    };
    let a = shifted(axes.0);
    let b = shifted(axes.1);
    Ok((a, b))
}

/// Source of generated view pairs and their cross-view matches.
pub trait PairSampler: Sync {
    fn view_count(&self) -> usize;
    fn conditioning(&self, view: usize) -> Camera;
    /// Matches between the two views generated for nominal cameras `a` and
    /// `b`; an error skips the pair.
    fn generate_matches(&self, view: usize, pair: u64, a: &Camera, b: &Camera) -> Result<Vec<PixelMatch>, String>;
}

/// Synthetic sampler: each generated view is rendered at the nominal motion
/// times the planted scale times an independent generator scale draw, and
/// matches are exact reprojections.
pub struct SynthPairSampler<'a> {
    pub sequences: &'a [SceneSequence],
    pub generator: GeneratorSim,
    pub matches_per_pair: usize,
}

impl PairSampler for SynthPairSampler<'_> {
    fn view_count(&self) -> usize {
        self.sequences.len()
    }

    fn conditioning(&self, view: usize) -> Camera {
        *self.sequences[view].conditioning()
    }

    fn generate_matches(&self, view: usize, pair: u64, a: &Camera, b: &Camera) -> Result<Vec<PixelMatch>, String> {
        let seq = &self.sequences[view];
        let scene = &seq.scene;
        let cond = seq.conditioning();
        let draw = |k: u64, nominal: &Camera| {
            let s = scene.planted_scale * self.generator.draw_scale(&scene.id, 2 * pair + k);
            scale_relative_motion(cond, nominal, s).map_err(|e| e.to_string())
        };
        let ga = draw(0, a)?;
        let gb = draw(1, b)?;
        let mut rng = keyed_rng(self.generator.seed, &[hash_str(&scene.id), pair, 0x7a7c]);
        correspondences(scene, &ga, &gb, self.matches_per_pair, &mut rng).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsTsedCurve {
    pub thresholds: Vec<f64>,
    /// Consistent-pair percentages per threshold.
    pub pct_all: Vec<f64>,
    pub pct_xy: Vec<f64>,
    pub pct_xz: Vec<f64>,
    pub pct_yz: Vec<f64>,
    /// Evaluated (non-skipped) pairs.
    pub pair_count: usize,
    pub pair_count_by_axis: [usize; 3],
    pub skips: usize,
}

/// Axis pair used for the `pair`-th sample of a view: pairs cycle through
/// xy, xz, yz so every view contributes evenly.
pub fn axis_pair_for(pair: u64) -> AxisPair {
    AxisPair::ALL[(pair % 3) as usize]
}

/// Runs SS-TSED over every view of `sampler`. Each `(view, pair)` draws its
/// camera signs from its own keyed stream.
pub fn ss_tsed_protocol<S: PairSampler + ?Sized>(
    sampler: &S,
    cfg: &TsedConfig,
    pairs_per_image: usize,
    seed: u64,
) -> Result<SsTsedCurve, TsedError> {
    cfg.validate()?;
    if pairs_per_image == 0 {
        return Err(TsedError::InvalidConfig("pairs_per_image must be at least 1".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..sampler.view_count())
        .flat_map(|v| (0..pairs_per_image as u64).map(move |p| (v, p)))
        .collect();
    let verdicts: Vec<Result<Option<PairVerdict>, TsedError>> = jobs
        .par_iter()
        .map(|&(view, pair)| {
            let axis_pair = axis_pair_for(pair);
            let mut rng = keyed_rng(seed, &[view as u64, pair]);
            let cond = sampler.conditioning(view);
            let (a, b) = axis_translation_cameras(&cond, axis_pair.axes(), cfg.translation_magnitude, &mut rng)?;
            let Ok(matches) = sampler.generate_matches(view, pair, &a, &b) else {
                return Ok(None);
            };
            let f = fundamental_between(&a, &b);
            let mut v = tsed_pair(&matches, &f, cfg);
            v.axis_pair = Some(axis_pair);
            Ok(Some(v))
        })
        .collect();
    let k = cfg.t_error_sweep.len();
    let mut consistent = [vec![0usize; k], vec![0usize; k], vec![0usize; k]];
    let mut counts = [0usize; 3];
    let mut skips = 0;
    for v in verdicts {
        let Some(v) = v? else {
            skips += 1;
            continue;
        };
        let g = v.axis_pair.expect("set above").index();
        counts[g] += 1;
        for (c, &ok) in consistent[g].iter_mut().zip(&v.consistent_at) {
            *c += ok as usize;
        }
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let total: usize = counts.iter().sum();
    let group = |g: usize| (0..k).map(|i| pct(consistent[g][i], counts[g])).collect::<Vec<_>>();
    Ok(SsTsedCurve {
        thresholds: cfg.t_error_sweep.clone(),
        pct_all: (0..k)
            .map(|i| pct(consistent.iter().map(|c| c[i]).sum(), total))
            .collect(),
        pct_xy: group(0),
        pct_xz: group(1),
        pct_yz: group(2),
        pair_count: total,
        pair_count_by_axis: counts,
        skips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::synth::{make_sequences, SceneSpec, TrajectorySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sequences(n: usize) -> Vec<SceneSequence> {
        let k = Intrinsics::centered(128, 60f64.to_radians());
        make_sequences(n, 21, &SceneSpec::default(), &TrajectorySpec::default(), k).unwrap()
    }

    #[test]
    fn default_sweep() {
        let cfg = TsedConfig::default();
        assert_eq!(cfg.t_error_sweep.len(), 14);
        assert_eq!(cfg.t_error_sweep[0], 0.7);
        assert_eq!(cfg.t_error_sweep[13], 1.0);
        cfg.validate().unwrap();
        let bad = TsedConfig {
            t_error_sweep: vec![0.8, 0.7],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exact_and_insufficient_matches() {
        let seqs = sequences(1);
        let seq = &seqs[0];
        let cond = seq.conditioning();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = axis_translation_cameras(cond, (Axis::X, Axis::Y), 0.2, &mut rng).unwrap();
        let ms = correspondences(&seq.scene, &a, &b, 20, &mut rng).unwrap();
        let f = fundamental_between(&a, &b);
        let v = tsed_pair(&ms, &f, &TsedConfig::default());
        assert!(v.median_sed < 1e-6);
        assert!(v.consistent_at.iter().all(|&c| c));
        let v = tsed_pair(&ms[..5], &f, &TsedConfig::default());
        assert!(v.consistent_at.iter().all(|&c| !c));
        let v = tsed_pair(&[], &f, &TsedConfig::default());
        assert_eq!(v.median_sed, f64::INFINITY);
    }

    #[test]
    fn axis_cameras_construction() {
        let seqs = sequences(1);
        let cond = Camera::new(
            seqs[0].conditioning().intrinsics,
            Pose::new(
                *nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3).matrix(),
                Vector3::new(0.5, -1.0, 2.0),
            )
            .unwrap(),
        );
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (a, b) = axis_translation_cameras(&cond, (Axis::X, Axis::Y), 0.2, &mut r1).unwrap();
        assert_eq!(
            (a, b),
            axis_translation_cameras(&cond, (Axis::X, Axis::Y), 0.2, &mut r2).unwrap()
        );
        assert_eq!(a.pose.rotation, cond.pose.rotation);
        assert_eq!(b.pose.rotation, cond.pose.rotation);
        let da = a.center() - cond.center();
        let db = b.center() - cond.center();
        assert!((da.norm() - 0.2).abs() < 1e-12 && (db.norm() - 0.2).abs() < 1e-12);
        assert!(da.y.abs() < 1e-12 && da.z.abs() < 1e-12);
        assert!(db.x.abs() < 1e-12 && db.z.abs() < 1e-12);
        assert_eq!(
            axis_translation_cameras(&cond, (Axis::Z, Axis::Z), 0.2, &mut r1),
            Err(TsedError::SameAxis)
        );
    }

    #[test]
    fn scale_mismatch_raises_median_sed() {
        let seqs = sequences(3);
        for seq in &seqs {
            let cond = seq.conditioning();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let (a, b) = axis_translation_cameras(cond, (Axis::X, Axis::Y), 0.2, &mut rng).unwrap();
            let f = fundamental_between(&a, &b);
            let sed = |sa: f64, sb: f64| {
                let ga = scale_relative_motion(cond, &a, sa).unwrap();
                let gb = scale_relative_motion(cond, &b, sb).unwrap();
                let ms = correspondences(&seq.scene, &ga, &gb, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
                tsed_pair(&ms, &f, &TsedConfig::default()).median_sed
            };
            let s = seq.scene.planted_scale;
            assert!(sed(s, 1.5 * s) > sed(s, s));
        }
    }

    #[test]
    fn protocol_noiseless_is_fully_consistent() {
        let seqs = sequences(3);
        let sampler = SynthPairSampler {
            sequences: &seqs,
            generator: GeneratorSim::new(0.0, 5).unwrap(),
            matches_per_pair: 50,
        };
        let curve = ss_tsed_protocol(&sampler, &TsedConfig::default(), 6, 1).unwrap();
        assert_eq!(curve.pair_count + curve.skips, 18);
        assert!(curve.pct_all.iter().all(|&p| p == 100.0));
        assert_eq!(curve.pair_count_by_axis, [6, 6, 6]);
        let again = ss_tsed_protocol(&sampler, &TsedConfig::default(), 6, 1).unwrap();
        assert_eq!(curve, again);
    }

    #[test]
    fn gauge_rescaling_keeps_verdicts() {
        let seqs = sequences(1);
        let seq = &seqs[0];
        let cond = seq.conditioning();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, b) = axis_translation_cameras(cond, (Axis::X, Axis::Z), 0.2, &mut rng).unwrap();
        let f = fundamental_between(&a, &b);
        let run = |c: f64| {
            let scene = seq.scene.scaled(c);
            let ga = scale_relative_motion(cond, &a, c * 1.1).unwrap();
            let gb = scale_relative_motion(cond, &b, c * 0.8).unwrap();
            let ms = correspondences(&scene, &ga, &gb, 100, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            tsed_pair(&ms, &f, &TsedConfig::default())
        };
        let base = run(1.0);
        let scaled = run(2.5);
        assert_eq!(base.consistent_at, scaled.consistent_at);
        assert!((base.median_sed - scaled.median_sed).abs() < 1e-9);
    }
}
