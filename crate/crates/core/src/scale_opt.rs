//! Per-scene scale learning: the clamped exponential parameterization,
//! a pluggable per-scene objective, Adam on the raw parameters, and
//! convergence diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{relative_pose, scale_relative_motion, Camera, GeometryError, Z_MIN};
use crate::rng::keyed_rng;
use crate::stats::pearson;
use crate::synth::SyntheticScene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleOptError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("scene {0:?} has no initial scale")]
    MissingInit(String),
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error("non-finite loss or gradient for scene {scene:?} at s = {scale}")]
    NonFinite { scene: String, scale: f64 },
    #[error("no photometric support")]
    NoPhotometricSupport,
    #[error("history of {len} epochs is too short for stride {stride}")]
    HistoryTooShort { len: usize, stride: usize },
    #[error("scale sets have different ids")]
    IdMismatch,
    #[error("need at least two scenes with nonzero log-scale variance")]
    DegenerateCorrelation,
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `s = exp(a * clamp(beta, -1, 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParam {
    pub beta: f64,
    pub a: f64,
}

impl Default for ScaleParam {
    fn default() -> Self {
        Self { beta: 0.0, a: 1.0 }
    }
}

impl ScaleParam {
    /// Parameter reproducing `s`; scales beyond `e^{±a}` saturate.
    pub fn from_scale(s: f64, a: f64) -> Result<Self, ScaleOptError> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(ScaleOptError::NonPositiveScale(s));
        }
        if !(a > 0.0) {
            return Err(ScaleOptError::InvalidConfig(format!("a must be positive, got {a}")));
        }
        Ok(Self { beta: s.ln() / a, a })
    }

    pub fn scale(&self) -> f64 {
        scale_from_beta(self.beta, self.a)
    }
}

pub fn scale_from_beta(beta: f64, a: f64) -> f64 {
    (a * beta.clamp(-1.0, 1.0)).exp()
}

/// Exact derivative of [`scale_from_beta`]; at `|beta| = 1` the interior
/// value is used.
pub fn dscale_dbeta(beta: f64, a: f64) -> f64 {
    if beta.abs() > 1.0 {
        0.0
    } else {
        a * scale_from_beta(beta, a)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub params: BTreeMap<String, ScaleParam>,
}

#[derive(Serialize, Deserialize)]
struct ScaleEntry {
    beta: f64,
    a: f64,
    s: f64,
}

impl ScaleSet {
    pub fn uniform<I: IntoIterator<Item = S>, S: Into<String>>(ids: I, param: ScaleParam) -> Self {
        Self {
            params: ids.into_iter().map(|id| (id.into(), param)).collect(),
        }
    }

    pub fn from_scales(scales: &BTreeMap<String, f64>, a: f64) -> Result<Self, ScaleOptError> {
        let params = scales
            .iter()
            .map(|(id, &s)| Ok((id.clone(), ScaleParam::from_scale(s, a)?)))
            .collect::<Result<_, ScaleOptError>>()?;
        Ok(Self { params })
    }

    pub fn scale(&self, id: &str) -> Option<f64> {
        self.params.get(id).map(ScaleParam::scale)
    }

    pub fn scales(&self) -> BTreeMap<String, f64> {
        self.params.iter().map(|(id, p)| (id.clone(), p.scale())).collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `{id: {beta, a, s}}` in id order.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&String, ScaleEntry> = self
            .params
            .iter()
            .map(|(id, p)| {
                (
                    id,
                    ScaleEntry {
                        beta: p.beta,
                        a: p.a,
                        s: p.scale(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("plain numbers serialize")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        let map: BTreeMap<String, ScaleEntry> = serde_json::from_value(value.clone())?;
        Ok(Self {
            params: map
                .into_iter()
                .map(|(id, e)| (id, ScaleParam { beta: e.beta, a: e.a }))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ScaleOptError> {
        let bad = |m: String| Err(ScaleOptError::InvalidConfig(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, d) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {d}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }
}

/// Adam state for one scalar parameter; the step counter only advances
/// when the parameter is updated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdamState {
    m: f64,
    v: f64,
    t: i32,
}

impl AdamState {
    pub fn step(&mut self, param: &mut f64, grad: f64, cfg: &OptimizerConfig) {
        self.t += 1;
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad;
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - cfg.beta1.powi(self.t));
        let v_hat = self.v / (1.0 - cfg.beta2.powi(self.t));
        *param -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Per-scene loss as a function of that scene's scale.
pub trait ScaleObjective: Sync {
    fn scene_ids(&self) -> Vec<String>;
    fn loss_and_grad(&self, scene_id: &str, s: f64) -> Result<(f64, f64), ScaleOptError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleHistory {
    pub ids: Vec<String>,
    /// `scales[epoch][i]` is the scale of `ids[i]` after that epoch.
    pub scales: Vec<Vec<f64>>,
    /// Mean objective value over all scenes, evaluated during each epoch.
    pub losses: Vec<f64>,
}

impl ScaleHistory {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// Adam on `beta` for every scene of `objective`, minibatched over a seeded
/// shuffle of the sorted ids. Scenes in `freeze` are evaluated but never
/// updated.
pub fn optimize_scales<O: ScaleObjective + ?Sized>(
    objective: &O,
    init: &ScaleSet,
    cfg: &OptimizerConfig,
    freeze: &BTreeSet<String>,
) -> Result<(ScaleSet, ScaleHistory), ScaleOptError> {
    cfg.validate()?;
    let mut ids = objective.scene_ids();
    ids.sort();
    ids.dedup();
    for id in &ids {
        if !init.params.contains_key(id) {
            return Err(ScaleOptError::MissingInit(id.clone()));
        }
    }
    let mut params: Vec<ScaleParam> = ids.iter().map(|id| init.params[id]).collect();
    let mut states = vec![AdamState::default(); ids.len()];
    let frozen: Vec<bool> = ids.iter().map(|id| freeze.contains(id)).collect();
    let mut history = ScaleHistory {
        ids: ids.clone(),
        scales: Vec::with_capacity(cfg.epochs),
        losses: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..ids.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut keyed_rng(cfg.seed, &[epoch as u64]));
        let mut epoch_losses = vec![0.0; ids.len()];
        for batch in order.chunks(cfg.batch_size) {
            let evals: Vec<Result<(f64, f64), ScaleOptError>> = batch
                .par_iter()
                .map(|&i| {
                    let s = params[i].scale();
                    let (loss, dloss) = objective.loss_and_grad(&ids[i], s)?;
                    if !loss.is_finite() || !dloss.is_finite() {
                        return Err(ScaleOptError::NonFinite {
                            scene: ids[i].clone(),
                            scale: s,
                        });
                    }
                    Ok((loss, dloss))
                })
                .collect();
            for (&i, eval) in batch.iter().zip(evals) {
                let (loss, dloss) = eval?;
                epoch_losses[i] = loss;
                if frozen[i] {
                    continue;
                }
                let p = &mut params[i];
                let grad = dloss * dscale_dbeta(p.beta, p.a);
                states[i].step(&mut p.beta, grad, cfg);
            }
        }
        let n = ids.len().max(1) as f64;
        history.losses.push(epoch_losses.iter().sum::<f64>() / n);
        history.scales.push(params.iter().map(ScaleParam::scale).collect());
    }
    let mut out = init.clone();
    for (id, p) in ids.iter().zip(params) {
        out.params.insert(id.clone(), p);
    }
    Ok((out, history))
}

/// `Δ_k = mean_i |log s_{i,k} − log s_{i,k−stride}|` for `k = stride..len`.
pub fn delta_scales(history: &ScaleHistory, stride: usize) -> Result<Vec<f64>, ScaleOptError> {
    let len = history.len();
    if stride == 0 || len <= stride {
        return Err(ScaleOptError::HistoryTooShort { len, stride });
    }
    Ok((stride..len)
        .map(|k| {
            let (now, then) = (&history.scales[k], &history.scales[k - stride]);
            let n = now.len().max(1) as f64;
            now.iter().zip(then).map(|(a, b)| (a.ln() - b.ln()).abs()).sum::<f64>() / n
        })
        .collect())
}

/// Pearson correlation of log-scales over identical id sets.
pub fn log_scale_correlation(a: &ScaleSet, b: &ScaleSet) -> Result<f64, ScaleOptError> {
    if !a.params.keys().eq(b.params.keys()) {
        return Err(ScaleOptError::IdMismatch);
    }
    let la: Vec<f64> = a.params.values().map(|p| p.scale().ln()).collect();
    let lb: Vec<f64> = b.params.values().map(|p| p.scale().ln()).collect();
    pearson(&la, &lb).ok_or(ScaleOptError::DegenerateCorrelation)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SupportPoint {
    point: Vector3<f64>,
    intensity: f64,
    patch: usize,
}

/// Photometric warp objective for one (conditioning, target) pair.
///
/// Conditioning pixels are lifted with ground-truth depth and projected into
/// the nominal target camera whose relative translation is scaled by `s`.
/// The prediction there is compared against the true target view, sampled
/// continuously on the same surface layer, so the loss vanishes at the
/// planted scale and is differentiable in `s`. The support is fixed at
/// construction: conditioning pixels whose surface is visible in the true
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricPair {
    scene: SyntheticScene,
    cond: Camera,
    target: Camera,
    true_target: Camera,
    support: Vec<SupportPoint>,
}

impl PhotometricPair {
    /// Support on every `stride`-th pixel in both directions.
    pub fn new(scene: &SyntheticScene, cond: &Camera, target: &Camera, stride: usize) -> Result<Self, ScaleOptError> {
        let stride = stride.max(1);
        let true_target = scale_relative_motion(cond, target, scene.planted_scale)?;
        let (w, h) = (cond.intrinsics.width as usize, cond.intrinsics.height as usize);
        let support: Vec<SupportPoint> = (0..h)
            .step_by(stride)
            .flat_map(|y| (0..w).step_by(stride).map(move |x| Vector2::new(x as f64, y as f64)))
            .filter_map(|p| {
                let hit = scene.trace(cond, &p)?;
                let point = cond.unproject(&p, hit.depth);
                scene.visible_projection(&true_target, &point)?;
                Some(SupportPoint {
                    point,
                    intensity: scene.intensity(&hit),
                    patch: hit.patch,
                })
            })
            .collect();
        if support.is_empty() {
            return Err(ScaleOptError::NoPhotometricSupport);
        }
        Ok(Self {
            scene: scene.clone(),
            cond: *cond,
            target: *target,
            true_target,
            support,
        })
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Mean squared photometric error and its derivative in `s`. Points whose
    /// projection leaves the image are excluded.
    pub fn loss_and_grad(&self, s: f64) -> Result<(f64, f64), ScaleOptError> {
        let cam = scale_relative_motion(&self.cond, &self.target, s)?;
        let dt = relative_pose(&self.cond.pose, &self.target.pose).translation;
        let k = &cam.intrinsics;
        let (mut sum, mut dsum, mut n) = (0.0, 0.0, 0usize);
        for sp in &self.support {
            let xc = cam.pose.transform(&sp.point);
            if !(xc.z > Z_MIN) {
                continue;
            }
            let q = Vector2::new(k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy);
            if !k.contains(&q) {
                continue;
            }
            let Some((value, grad)) = self.scene.layer_intensity(&self.true_target, sp.patch, &q) else {
                continue;
            };
            let z2 = xc.z * xc.z;
            let dq = Vector2::new(
                k.fx * (dt.x * xc.z - xc.x * dt.z) / z2,
                k.fy * (dt.y * xc.z - xc.y * dt.z) / z2,
            );
            let r = value - sp.intensity;
            sum += r * r;
            dsum += 2.0 * r * grad.dot(&dq);
            n += 1;
        }
        if n == 0 {
            return Err(ScaleOptError::NoPhotometricSupport);
        }
        Ok((sum / n as f64, dsum / n as f64))
    }
}

/// Full-resolution photometric objective for a single pair.
pub fn surrogate_loss(
    scene: &SyntheticScene,
    cond: &Camera,
    target: &Camera,
    s: f64,
) -> Result<(f64, f64), ScaleOptError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(ScaleOptError::NonPositiveScale(s));
    }
    PhotometricPair::new(scene, cond, target, 1)?.loss_and_grad(s)
}

/// Per-scene mean of [`PhotometricPair`] losses.
#[derive(Debug, Clone, Default)]
pub struct PhotometricObjective {
    pub scenes: BTreeMap<String, Vec<PhotometricPair>>,
}

impl PhotometricObjective {
    pub fn insert(&mut self, id: impl Into<String>, pair: PhotometricPair) {
        self.scenes.entry(id.into()).or_default().push(pair);
    }
}

impl ScaleObjective for PhotometricObjective {
    fn scene_ids(&self) -> Vec<String> {
        self.scenes.keys().cloned().collect()
    }

    fn loss_and_grad(&self, scene_id: &str, s: f64) -> Result<(f64, f64), ScaleOptError> {
        let pairs = self
            .scenes
            .get(scene_id)
            .ok_or_else(|| ScaleOptError::UnknownScene(scene_id.to_string()))?;
        let (mut l, mut g) = (0.0, 0.0);
        for pair in pairs {
            let (pl, pg) = pair.loss_and_grad(s)?;
            l += pl;
            g += pg;
        }
        let n = pairs.len().max(1) as f64;
        Ok((l / n, g / n))
    }
}
