//! Experimental protocols over synthetic datasets: dataset generation and
//! on-disk layout, SFC over a magnitude set, SS-TSED, scale learning and
//! depth calibration benchmarks, and averaged edge heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{self, DataError, PngDepth, SfcRow, TrajectoryFile, TrajectoryFrame};
use crate::depth_calib::{unreliable_count, CalibError, DepthPairSample};
use crate::flow_metrics::{edge_heatmap, sfc_pipeline, FlowMetricsError, FlowPair, MaskConfig, SfcResult};
use crate::geometry::{GeometryError, Intrinsics};
use crate::rng::keyed_rng;
use crate::scale_opt::{PhotometricObjective, PhotometricPair, ScaleOptError, ScaleSet};
use crate::synth::{
    gt_flow, make_sequences, render, synthesize_depth_pairs, GeneratorSim, Patch, SceneSequence, SceneSpec, SynthError,
    SyntheticScene, TrajectorySpec,
};
use crate::tsed::{ss_tsed_protocol, SsTsedCurve, SynthPairSampler, TsedConfig, TsedError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("scene {scene:?}: {source}")]
    Flow { scene: String, source: FlowMetricsError },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    ScaleOpt(#[from] ScaleOptError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Tsed(#[from] TsedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Translation magnitudes, nominal units, ascending.
    pub magnitudes: Vec<f64>,
    pub images_per_eval: usize,
    pub samples_per_view: usize,
    pub pairs_per_image: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            magnitudes: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            images_per_eval: 200,
            samples_per_view: 10,
            pairs_per_image: 100,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::Config(m.to_string()));
        if self.magnitudes.is_empty() || !self.magnitudes.iter().all(|&m| m > 0.0 && m.is_finite()) {
            return bad("magnitudes must be non-empty and positive");
        }
        if self.magnitudes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("magnitudes must be strictly ascending");
        }
        if self.images_per_eval == 0 || self.samples_per_view == 0 || self.pairs_per_image == 0 {
            return bad("counts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGenConfig {
    pub scenes: usize,
    pub image_size: u32,
    pub fov_x_degrees: f64,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub depth_points_per_view: usize,
    /// Log-normal noise std of monocular depths in clean scenes.
    pub mono_noise: f64,
    /// Fraction of scenes whose monocular depths get `outlier_noise` instead.
    pub outlier_fraction: f64,
    pub outlier_noise: f64,
}

impl Default for SynthGenConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            image_size: 128,
            fov_x_degrees: 60.0,
            scene: SceneSpec::default(),
            trajectory: TrajectorySpec::default(),
            depth_points_per_view: 64,
            mono_noise: 0.02,
            outlier_fraction: 0.3,
            outlier_noise: 0.4,
        }
    }
}

impl SynthGenConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::Config(m.to_string()));
        if self.scenes == 0 {
            return bad("scenes must be at least 1");
        }
        if self.image_size < 2 {
            return bad("image size must be at least 2");
        }
        if !(self.fov_x_degrees > 0.0 && self.fov_x_degrees < 180.0) {
            return bad("field of view must lie in (0, 180) degrees");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)");
        }
        if !(self.mono_noise >= 0.0 && self.outlier_noise >= 0.0) {
            return bad("depth noise must be non-negative");
        }
        self.scene.validate()?;
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.image_size, self.fov_x_degrees.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub sequences: Vec<SceneSequence>,
    pub depth_pairs: Vec<Vec<(usize, DepthPairSample)>>,
    /// Scenes whose monocular depths carry outlier noise.
    pub outliers: BTreeSet<String>,
}

impl SynthDataset {
    pub fn planted_scales(&self) -> BTreeMap<String, f64> {
        self.sequences
            .iter()
            .map(|s| (s.scene.id.clone(), s.scene.planted_scale))
            .collect()
    }
}

pub fn generate_dataset(cfg: &SynthGenConfig, seed: u64) -> Result<SynthDataset, ProtocolError> {
    cfg.validate()?;
    let sequences = make_sequences(cfg.scenes, seed, &cfg.scene, &cfg.trajectory, cfg.intrinsics())?;
    let mut ids: Vec<String> = sequences.iter().map(|s| s.scene.id.clone()).collect();
    ids.shuffle(&mut keyed_rng(seed, &[0x07, 1]));
    let count = if cfg.outlier_fraction > 0.0 {
        unreliable_count(ids.len(), cfg.outlier_fraction)
    } else {
        0
    };
    let outliers: BTreeSet<String> = ids.into_iter().take(count).collect();
    let depth_pairs = sequences
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let noise = if outliers.contains(&seq.scene.id) {
                cfg.outlier_noise
            } else {
                cfg.mono_noise
            };
            let mut rng = keyed_rng(seed, &[0xde, i as u64]);
            synthesize_depth_pairs(seq, cfg.depth_points_per_view, noise, &mut rng)
        })
        .collect();
    Ok(SynthDataset {
        sequences,
        depth_pairs,
        outliers,
    })
}

/// Scene geometry as stored on disk; the planted scale lives in the
/// withheld `scales.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneFile {
    id: String,
    patches: Vec<Patch>,
    background: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub seed: u64,
    pub config: SynthGenConfig,
    pub magnitudes: Vec<f64>,
    pub scenes: Vec<String>,
}

fn frame_name(k: usize) -> String {
    format!("frame_{k:03}")
}

fn to_json<T: Serialize>(v: &T) -> Result<String, DataError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| DataError::Json(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DataError> {
    let bytes = dataio::read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| DataError::Json(format!("{}: {e}", path.display())))
}

/// Writes `manifest.json`, withheld `scales.json` / `outliers.json`, and per
/// scene: `scene.json`, `cameras.txt` (nominal), true renders and depths per
/// frame, exact flows between frame 0 and the frames selected for
/// `magnitudes`, and `depth_pairs.csv`.
pub fn write_dataset(
    dir: &Path,
    data: &SynthDataset,
    cfg: &SynthGenConfig,
    seed: u64,
    magnitudes: &[f64],
) -> Result<(), ProtocolError> {
    let manifest = Manifest {
        schema_version: dataio::SCHEMA_VERSION.into(),
        seed,
        config: cfg.clone(),
        magnitudes: magnitudes.to_vec(),
        scenes: data.sequences.iter().map(|s| s.scene.id.clone()).collect(),
    };
    dataio::write_file(&dir.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    dataio::write_file(&dir.join("scales.json"), to_json(&data.planted_scales())?.as_bytes())?;
    dataio::write_file(&dir.join("outliers.json"), to_json(&data.outliers)?.as_bytes())?;
    data.sequences
        .par_iter()
        .zip(&data.depth_pairs)
        .try_for_each(|(seq, pairs)| -> Result<(), ProtocolError> {
            let sd = dir.join("scenes").join(&seq.scene.id);
            let file = SceneFile {
                id: seq.scene.id.clone(),
                patches: seq.scene.patches.clone(),
                background: seq.scene.background,
            };
            dataio::write_file(&sd.join("scene.json"), to_json(&file)?.as_bytes())?;
            let traj = TrajectoryFile {
                source: format!("synthetic://{}", seq.scene.id),
                frames: seq
                    .frames
                    .iter()
                    .enumerate()
                    .map(|(k, c)| TrajectoryFrame::from_camera(c, 33_333 * k as i64))
                    .collect(),
            };
            dataio::write_file(&sd.join("cameras.txt"), dataio::serialize_trajectory(&traj).as_bytes())?;
            for k in 0..seq.frames.len() {
                let out = render(&seq.scene, &seq.true_frame(k));
                dataio::write_png(
                    &sd.join("images").join(format!("{}.png", frame_name(k))),
                    &out.image,
                    PngDepth::Sixteen,
                )?;
                dataio::write_pfm(&sd.join("depths").join(format!("{}.pfm", frame_name(k))), &out.depth)?;
            }
            let cond = seq.true_frame(0);
            let selected: BTreeSet<usize> = magnitudes.iter().map(|&m| seq.closest_frame(m)).collect();
            for k in selected {
                let target = seq.true_frame(k);
                let (fwd, _) = gt_flow(&seq.scene, &cond, &target);
                let (bwd, _) = gt_flow(&seq.scene, &target, &cond);
                dataio::write_flow(&sd.join("flows").join(format!("fwd_{k:03}.flo")), &fwd)?;
                dataio::write_flow(&sd.join("flows").join(format!("bwd_{k:03}.flo")), &bwd)?;
            }
            dataio::write_file(&sd.join("depth_pairs.csv"), dataio::depth_pairs_csv(pairs).as_bytes())?;
            Ok(())
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub sequences: Vec<SceneSequence>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ProtocolError> {
    Ok(from_json(&dir.join("manifest.json"))?)
}

/// Loads scenes and nominal cameras. Planted scales are read from the
/// withheld `scales.json` because the simulator needs them to render the
/// true views; protocols never hand them to an estimator.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, ProtocolError> {
    let manifest = read_manifest(dir)?;
    let scales: BTreeMap<String, f64> = from_json(&dir.join("scales.json"))?;
    let size = manifest.config.image_size;
    let sequences = manifest
        .scenes
        .iter()
        .map(|id| {
            let sd = dir.join("scenes").join(id);
            let file: SceneFile = from_json(&sd.join("scene.json"))?;
            let text = String::from_utf8_lossy(&dataio::read_file(&sd.join("cameras.txt"))?).into_owned();
            let traj = dataio::parse_trajectory(&text)?;
            let frames = traj
                .frames
                .iter()
                .map(|f| f.camera(size, size))
                .collect::<Result<Vec<_>, _>>()?;
            let planted_scale = *scales
                .get(id)
                .ok_or_else(|| DataError::Json(format!("scales.json has no entry for {id:?}")))?;
            Ok(SceneSequence {
                scene: SyntheticScene {
                    id: file.id,
                    patches: file.patches,
                    planted_scale,
                    background: file.background,
                },
                frames,
            })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    Ok(LoadedDataset { manifest, sequences })
}

pub fn load_depth_pairs(dir: &Path, id: &str) -> Result<Vec<DepthPairSample>, ProtocolError> {
    let path = dir.join("scenes").join(id).join("depth_pairs.csv");
    let text = String::from_utf8_lossy(&dataio::read_file(&path)?).into_owned();
    Ok(dataio::parse_depth_pairs_csv(&text)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskChoice {
    /// Aggregate mask from the exact flows of the true target view.
    #[default]
    GroundTruth,
    Consensus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfcProtocolOutput {
    /// One row per (view, magnitude), in view then magnitude order.
    pub rows: Vec<SfcRow>,
    /// `(magnitude, mean SFC over views)`.
    pub per_magnitude: Vec<(f64, f64)>,
    pub results: Vec<SfcResult>,
}

/// SFC for the first `images_per_eval` views at every magnitude: the target
/// is the trajectory frame whose nominal distance is closest to the
/// magnitude, and each of `samples_per_view` generations moves the camera by
/// the true relative motion times the generator's scale draw.
pub fn sfc_protocol(
    sequences: &[SceneSequence],
    generator: &GeneratorSim,
    protocol: &ProtocolConfig,
    mask_cfg: &MaskConfig,
    mask: MaskChoice,
) -> Result<SfcProtocolOutput, ProtocolError> {
    protocol.validate()?;
    if protocol.samples_per_view < 2 {
        return Err(ProtocolError::Config("SFC needs at least 2 samples per view".into()));
    }
    let views = &sequences[..sequences.len().min(protocol.images_per_eval)];
    let jobs: Vec<(usize, f64)> = (0..views.len())
        .flat_map(|v| protocol.magnitudes.iter().map(move |&m| (v, m)))
        .collect();
    let results: Vec<SfcResult> = jobs
        .par_iter()
        .map(|&(v, magnitude)| {
            let seq = &views[v];
            let cond = seq.true_frame(0);
            let target = seq.true_frame(seq.closest_frame(magnitude));
            let samples: Vec<FlowPair> = (0..protocol.samples_per_view as u64)
                .map(|i| {
                    let (cam, _) = generator.sample_camera(&seq.scene, &cond, &target, i);
                    FlowPair {
                        fwd: gt_flow(&seq.scene, &cond, &cam).0,
                        bwd: gt_flow(&seq.scene, &cam, &cond).0,
                    }
                })
                .collect();
            let gt = match mask {
                MaskChoice::GroundTruth => Some(FlowPair {
                    fwd: gt_flow(&seq.scene, &cond, &target).0,
                    bwd: gt_flow(&seq.scene, &target, &cond).0,
                }),
                MaskChoice::Consensus => None,
            };
            sfc_pipeline(&samples, gt.as_ref(), mask_cfg).map_err(|source| ProtocolError::Flow {
                scene: seq.scene.id.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<SfcRow> = jobs
        .iter()
        .zip(&results)
        .map(|(&(v, m), r)| SfcRow {
            scene: views[v].scene.id.clone(),
            translation_magnitude: m,
            n: r.sample_count,
            sfc: r.sfc,
            mean_flow_magnitude: r.mean_flow_magnitude,
            mask_source: r.mask_source.as_str().into(),
        })
        .collect();
    let per_magnitude = protocol
        .magnitudes
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.translation_magnitude == m)
                .map(|r| r.sfc)
                .collect();
            (m, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    Ok(SfcProtocolOutput {
        rows,
        per_magnitude,
        results,
    })
}

/// SFC from stored flows: every sample pair `fwd_*.flo` / `bwd_*.flo` in
/// `dir` (matched by suffix), consensus mask.
pub fn sfc_from_flow_dir(dir: &Path, mask_cfg: &MaskConfig) -> Result<SfcResult, ProtocolError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("fwd_") && n.ends_with(".flo"))
        .collect();
    names.sort();
    let samples = names
        .iter()
        .map(|n| {
            let fwd = dataio::read_flow(&dir.join(n))?;
            let bwd = dataio::read_flow(&dir.join(n.replacen("fwd_", "bwd_", 1)))?;
            Ok(FlowPair { fwd, bwd })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    sfc_pipeline(&samples, None, mask_cfg).map_err(|source| ProtocolError::Flow {
        scene: dir.display().to_string(),
        source,
    })
}

/// SS-TSED over the first `images_per_eval` views with exact-reprojection
/// matches.
pub fn ss_tsed_run(
    sequences: &[SceneSequence],
    generator: &GeneratorSim,
    tsed: &TsedConfig,
    protocol: &ProtocolConfig,
    matches_per_pair: usize,
) -> Result<SsTsedCurve, ProtocolError> {
    protocol.validate()?;
    if matches_per_pair == 0 {
        return Err(ProtocolError::Config("matches per pair must be at least 1".into()));
    }
    let views = &sequences[..sequences.len().min(protocol.images_per_eval)];
    let sampler = SynthPairSampler {
        sequences: views,
        generator: *generator,
        matches_per_pair,
    };
    Ok(ss_tsed_protocol(
        &sampler,
        tsed,
        protocol.pairs_per_image,
        protocol.seed,
    )?)
}

/// Photometric objective with one pair per (scene, magnitude), support on
/// every `stride`-th pixel.
pub fn photometric_objective(
    sequences: &[SceneSequence],
    magnitudes: &[f64],
    stride: usize,
) -> Result<PhotometricObjective, ProtocolError> {
    if magnitudes.is_empty() {
        return Err(ProtocolError::Config("need at least one target magnitude".into()));
    }
    let pairs: Vec<(String, PhotometricPair)> = sequences
        .par_iter()
        .flat_map_iter(|seq| {
            magnitudes.iter().map(move |&m| {
                let target = &seq.frames[seq.closest_frame(m)];
                PhotometricPair::new(&seq.scene, seq.conditioning(), target, stride).map(|p| (seq.scene.id.clone(), p))
            })
        })
        .collect::<Result<_, _>>()?;
    let mut obj = PhotometricObjective::default();
    for (id, p) in pairs {
        obj.insert(id, p);
    }
    Ok(obj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub max_abs_log_error: f64,
    pub mean_abs_log_error: f64,
}

/// `|log(ŝ / s*)|` statistics over the ids present in both.
pub fn recovery_stats(learned: &ScaleSet, planted: &BTreeMap<String, f64>) -> Option<RecoveryStats> {
    let errs: Vec<f64> = learned
        .params
        .iter()
        .filter_map(|(id, p)| planted.get(id).map(|s| (p.scale() / s).ln().abs()))
        .collect();
    if errs.is_empty() {
        return None;
    }
    Some(RecoveryStats {
        max_abs_log_error: errs.iter().cloned().fold(0.0, f64::max),
        mean_abs_log_error: errs.iter().sum::<f64>() / errs.len() as f64,
    })
}

/// Averaged Sobel heatmap over `n` generated samples of the view at the
/// frame closest to `magnitude`.
pub fn sample_heatmap(
    seq: &SceneSequence,
    generator: &GeneratorSim,
    magnitude: f64,
    n: usize,
) -> Result<crate::grid::ScalarGrid, ProtocolError> {
    let cond = seq.true_frame(0);
    let target = seq.true_frame(seq.closest_frame(magnitude));
    let images: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|i| render(&seq.scene, &generator.sample_camera(&seq.scene, &cond, &target, i).0).image)
        .collect();
    edge_heatmap(&images).map_err(|source| ProtocolError::Flow {
        scene: seq.scene.id.clone(),
        source,
    })
}

/// Shannon entropy (nats) of a non-negative map treated as a distribution;
/// higher means the response is spread more evenly.
pub fn heatmap_entropy(map: &crate::grid::ScalarGrid) -> f64 {
    let total: f64 = map.data().iter().filter(|v| **v > 0.0).sum();
    if !(total > 0.0) {
        return 0.0;
    }
    -map.data()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|&v| {
            let p = v / total;
            p * p.ln()
        })
        .sum::<f64>()
}
