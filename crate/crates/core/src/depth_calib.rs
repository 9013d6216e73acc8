//! Reference scales from paired sparse (reconstruction) and monocular
//! (metric) depths, with a variance-based reliability split.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("no depth samples")]
    Empty,
    #[error("sample {index}: depths must be positive and finite (sparse {sparse}, mono {mono})")]
    InvalidSample { index: usize, sparse: f64, mono: f64 },
    #[error("sum of squared sparse depths is zero")]
    Degenerate,
    #[error("unreliable fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("no scenes to partition")]
    NoScenes,
    #[error("scene {0:?} has no reliability flag")]
    FlagsUnset(String),
    #[error("scene {scene:?}: {source}")]
    Scene { scene: String, source: Box<CalibError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPairSample {
    pub sparse_depth: f64,
    pub mono_depth: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitSpace {
    /// `argmin_a sum (a * sparse - mono)^2`.
    #[default]
    Linear,
    /// `argmin_a sum (ln a + ln sparse - ln mono)^2`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub alpha: f64,
    /// Mean squared residual divided by `mean(mono)^2`.
    pub residual_variance: f64,
    pub sample_count: usize,
}

pub fn fit_scene_scale(samples: &[DepthPairSample], space: FitSpace) -> Result<ScaleFit, CalibError> {
    if samples.is_empty() {
        return Err(CalibError::Empty);
    }
    for (index, s) in samples.iter().enumerate() {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(s.sparse_depth) || !ok(s.mono_depth) {
            return Err(CalibError::InvalidSample {
                index,
                sparse: s.sparse_depth,
                mono: s.mono_depth,
            });
        }
    }
    let n = samples.len() as f64;
    let alpha = match space {
        FitSpace::Linear => {
            let ss: f64 = samples.iter().map(|s| s.sparse_depth * s.sparse_depth).sum();
            if !(ss > 0.0) {
                return Err(CalibError::Degenerate);
            }
            samples.iter().map(|s| s.mono_depth * s.sparse_depth).sum::<f64>() / ss
        }
        FitSpace::Log => (samples
            .iter()
            .map(|s| (s.mono_depth / s.sparse_depth).ln())
            .sum::<f64>()
            / n)
            .exp(),
    };
    let mse = samples
        .iter()
        .map(|s| (alpha * s.sparse_depth - s.mono_depth).powi(2))
        .sum::<f64>()
        / n;
    let mean_mono = samples.iter().map(|s| s.mono_depth).sum::<f64>() / n;
    Ok(ScaleFit {
        alpha,
        residual_variance: mse / (mean_mono * mean_mono),
        sample_count: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCalibration {
    pub id: String,
    pub alpha: f64,
    pub residual_variance: f64,
    pub sample_count: usize,
    /// `None` until [`reliability_partition`] runs.
    pub reliable: Option<bool>,
}

/// Pooled fit of every scene, in id order.
pub fn calibrate_scenes(
    samples: &BTreeMap<String, Vec<DepthPairSample>>,
    space: FitSpace,
) -> Result<Vec<SceneCalibration>, CalibError> {
    let entries: Vec<(&String, &Vec<DepthPairSample>)> = samples.iter().collect();
    entries
        .par_iter()
        .map(|(id, s)| {
            let fit = fit_scene_scale(s, space).map_err(|e| CalibError::Scene {
                scene: id.to_string(),
                source: Box::new(e),
            })?;
            Ok(SceneCalibration {
                id: id.to_string(),
                alpha: fit.alpha,
                residual_variance: fit.residual_variance,
                sample_count: fit.sample_count,
                reliable: None,
            })
        })
        .collect()
}

/// Number of scenes flagged out of `n` at `fraction`: `ceil(fraction * n)`,
/// with a small guard so products like `0.3 * 10` land on the integer.
pub fn unreliable_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Flags the `ceil(fraction * N)` scenes with the largest residual variance
/// as unreliable. Among equal variances the greater id is flagged first.
/// Output is sorted by id.
pub fn reliability_partition(calibs: &[SceneCalibration], fraction: f64) -> Result<Vec<SceneCalibration>, CalibError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CalibError::InvalidFraction(fraction));
    }
    if calibs.is_empty() {
        return Err(CalibError::NoScenes);
    }
    let mut ranked: Vec<&SceneCalibration> = calibs.iter().collect();
    ranked.sort_by(|a, b| {
        b.residual_variance
            .total_cmp(&a.residual_variance)
            .then_with(|| b.id.cmp(&a.id))
    });
    let flagged = unreliable_count(calibs.len(), fraction);
    let mut out: Vec<SceneCalibration> = ranked
        .iter()
        .enumerate()
        .map(|(rank, c)| SceneCalibration {
            reliable: Some(rank >= flagged),
            ..(*c).clone()
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    /// Drop unreliable scenes.
    Trim,
    /// Keep unreliable scenes with scale 1.0.
    #[default]
    FallbackOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationPolicy {
    pub mode: PolicyMode,
    pub unreliable_fraction: f64,
}

impl Default for CalibrationPolicy {
    fn default() -> Self {
        Self {
            mode: PolicyMode::FallbackOne,
            unreliable_fraction: 0.30,
        }
    }
}

/// Scale map and retained ids under `policy`.
pub fn apply_policy(
    calibs: &[SceneCalibration],
    policy: &CalibrationPolicy,
) -> Result<(BTreeMap<String, f64>, BTreeSet<String>), CalibError> {
    let mut scales = BTreeMap::new();
    let mut retained = BTreeSet::new();
    for c in calibs {
        let reliable = c.reliable.ok_or_else(|| CalibError::FlagsUnset(c.id.clone()))?;
        let scale = match (reliable, policy.mode) {
            (true, _) => c.alpha,
            (false, PolicyMode::FallbackOne) => 1.0,
            (false, PolicyMode::Trim) => continue,
        };
        scales.insert(c.id.clone(), scale);
        retained.insert(c.id.clone());
    }
    Ok((scales, retained))
}
