//! Command-line front end: argument types, layered configuration and the
//! command implementations behind the `scalekit` binary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{self, DataError, PngDepth};
use crate::depth_calib::{
    apply_policy, calibrate_scenes, reliability_partition, CalibError, CalibrationPolicy, FitSpace, PolicyMode,
};
use crate::flow_metrics::{FlowMetricsError, MaskConfig};
use crate::protocol::{self, MaskChoice, ProtocolConfig, ProtocolError, SynthGenConfig};
use crate::scale_opt::{
    delta_scales, log_scale_correlation, optimize_scales, OptimizerConfig, ScaleOptError, ScaleParam, ScaleSet,
};
use crate::synth::{GeneratorSim, SynthError};
use crate::tsed::{TsedConfig, TsedError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        let msg = e.to_string();
        match e {
            ProtocolError::Config(_) | ProtocolError::Tsed(_) => CliError::Config(msg),
            ProtocolError::Synth(SynthError::InvalidSpec(_)) => CliError::Config(msg),
            ProtocolError::Flow {
                source: FlowMetricsError::InvalidConfig(_),
                ..
            } => CliError::Config(msg),
            ProtocolError::Flow { .. } => CliError::Numeric(msg),
            ProtocolError::ScaleOpt(e) => e.into(),
            ProtocolError::Calib(e) => e.into(),
            _ => CliError::Data(msg),
        }
    }
}

impl From<ScaleOptError> for CliError {
    fn from(e: ScaleOptError) -> Self {
        let msg = e.to_string();
        match e {
            ScaleOptError::InvalidConfig(_) => CliError::Config(msg),
            ScaleOptError::NonFinite { .. } | ScaleOptError::DegenerateCorrelation => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        let msg = e.to_string();
        match e {
            CalibError::InvalidFraction(_) => CliError::Config(msg),
            CalibError::Degenerate => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<TsedError> for CliError {
    fn from(e: TsedError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SfcSettings {
    pub sigmas: Vec<f64>,
    pub mask: MaskChoice,
}

impl Default for SfcSettings {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.15, 0.3, 0.6],
            mask: MaskChoice::GroundTruth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsTsedSettings {
    pub sigmas: Vec<f64>,
    pub matches_per_pair: usize,
}

impl Default for SsTsedSettings {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.3, 0.6],
            matches_per_pair: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnSettings {
    /// Nominal magnitudes of the target frames used in the objective.
    pub magnitudes: Vec<f64>,
    /// Pixel stride of the photometric support.
    pub stride: usize,
    /// Range hyperparameter of the scale parameterization.
    pub a: f64,
}

impl Default for LearnSettings {
    fn default() -> Self {
        Self {
            magnitudes: vec![0.2],
            stride: 4,
            a: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateSettings {
    pub policy: CalibrationPolicy,
    pub fit_space: FitSpace,
}

impl Default for CalibrateSettings {
    fn default() -> Self {
        Self {
            policy: CalibrationPolicy::default(),
            fit_space: FitSpace::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSettings {
    pub sigmas: Vec<f64>,
    pub magnitude: f64,
    pub samples: usize,
}

impl Default for HeatmapSettings {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.6],
            magnitude: 0.2,
            samples: 10,
        }
    }
}

/// Every tunable of every command. A `--config` file is a (partial) JSON
/// document of this shape; command-line flags override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub protocol: ProtocolConfig,
    pub synth: SynthGenConfig,
    pub mask: MaskConfig,
    pub sfc: SfcSettings,
    pub tsed: TsedConfig,
    pub ss_tsed: SsTsedSettings,
    pub optimizer: OptimizerConfig,
    pub learn: LearnSettings,
    pub calibrate: CalibrateSettings,
    pub heatmap: HeatmapSettings,
}

#[derive(Debug, Parser)]
#[command(
    name = "scalekit",
    version,
    about = "Scale-consistency metrics and per-scene scale learning"
)]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config file layered over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic dataset generation.
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
    /// Sample flow consistency over the magnitude set.
    Sfc(SfcArgs),
    /// Scale-sensitive TSED threshold sweep.
    SsTsed(SsTsedArgs),
    /// Per-scene scale learning.
    ScaleLearn(ScaleLearnArgs),
    /// Reference scales from paired depths.
    Calibrate(CalibrateArgs),
    /// Averaged Sobel heatmaps of generated samples.
    EdgeHeatmap(EdgeHeatmapArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthAction {
    Gen(SynthGenArgs),
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Image width and height in pixels.
    #[arg(long)]
    pub size: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskArg {
    GroundTruth,
    Consensus,
}

#[derive(Debug, Args)]
pub struct SfcArgs {
    #[arg(long, required_unless_present = "flows")]
    pub dataset: Option<PathBuf>,
    /// Directory of `fwd_*.flo` / `bwd_*.flo` sample pairs, scored with the
    /// consensus mask.
    #[arg(long, conflicts_with = "dataset")]
    pub flows: Option<PathBuf>,
    /// Generator log-scale noise; repeatable.
    #[arg(long = "sigma", allow_negative_numbers = true)]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub mask: Option<MaskArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SsTsedArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long = "sigma", allow_negative_numbers = true)]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    #[arg(long)]
    pub matches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScaleLearnArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Initial scales: a learned-scales JSON or a calibration scale map.
    /// Scenes missing from it are not trained.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `all` or a comma-separated list of scene ids.
    #[arg(long)]
    pub freeze: Option<String>,
    /// Learned scales of another run, for log-scale correlation.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Trim,
    FallbackOne,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, required_unless_present = "pairs")]
    pub dataset: Option<PathBuf>,
    /// Directory of `<scene id>.csv` depth-pair files.
    #[arg(long, conflicts_with = "dataset")]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub unreliable_fraction: Option<f64>,
    #[arg(long)]
    pub policy: Option<PolicyArg>,
    #[arg(long)]
    pub log_space: bool,
}

#[derive(Debug, Args)]
pub struct EdgeHeatmapArgs {
    #[arg(long, required_unless_present = "images")]
    pub dataset: Option<PathBuf>,
    /// Directory of PNG samples of one view.
    #[arg(long, conflicts_with = "dataset")]
    pub images: Option<PathBuf>,
    #[arg(long = "sigma", allow_negative_numbers = true)]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub magnitude: Option<f64>,
}

/// Defaults, then the `--config` file, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let bytes = dataio::read_file(path).map_err(|e| CliError::Config(e.to_string()))?;
            serde_json::from_slice::<RunConfig>(&bytes)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn sync_seeds(cfg: &mut RunConfig) {
    cfg.protocol.seed = cfg.seed;
    cfg.optimizer.seed = cfg.seed;
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = resolve_config(cli)?;
    let pool = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?,
        None => rayon::ThreadPoolBuilder::new()
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    pool.install(|| match &cli.command {
        Command::Synth {
            action: SynthAction::Gen(a),
        } => cmd_synth_gen(&cli.out, &mut cfg, a),
        Command::Sfc(a) => cmd_sfc(&cli.out, &mut cfg, a),
        Command::SsTsed(a) => cmd_ss_tsed(&cli.out, &mut cfg, a),
        Command::ScaleLearn(a) => cmd_scale_learn(&cli.out, &mut cfg, a),
        Command::Calibrate(a) => cmd_calibrate(&cli.out, &mut cfg, a),
        Command::EdgeHeatmap(a) => cmd_edge_heatmap(&cli.out, &mut cfg, a),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(dataio::write_file(path, text.as_bytes())?)
}

fn sigma_tag(s: f64) -> String {
    format!("sigma_{s}")
}

fn check_sigmas(sigmas: &[f64]) -> Result<(), CliError> {
    if sigmas.is_empty() {
        return Err(CliError::Config("need at least one sigma".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(CliError::Config(format!("sigma must be >= 0, got {s}")));
    }
    Ok(())
}

pub fn cmd_synth_gen(out: &Path, cfg: &mut RunConfig, a: &SynthGenArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if let Some(n) = a.scenes {
        cfg.synth.scenes = n;
    }
    if let Some(s) = a.size {
        cfg.synth.image_size = s;
    }
    cfg.protocol.validate()?;
    let data = protocol::generate_dataset(&cfg.synth, cfg.seed)?;
    protocol::write_dataset(out, &data, &cfg.synth, cfg.seed, &cfg.protocol.magnitudes)?;
    Ok(format!(
        "wrote {} scenes ({}x{}) to {}",
        data.sequences.len(),
        cfg.synth.image_size,
        cfg.synth.image_size,
        out.display()
    ))
}

#[derive(Serialize)]
struct SfcSummaryRow {
    sigma: f64,
    translation_magnitude: f64,
    mean_sfc: f64,
    views: usize,
}

pub fn cmd_sfc(out: &Path, cfg: &mut RunConfig, a: &SfcArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if !a.sigmas.is_empty() {
        cfg.sfc.sigmas = a.sigmas.clone();
    }
    if let Some(m) = a.mask {
        cfg.sfc.mask = match m {
            MaskArg::GroundTruth => MaskChoice::GroundTruth,
            MaskArg::Consensus => MaskChoice::Consensus,
        };
    }
    if let Some(n) = a.samples {
        cfg.protocol.samples_per_view = n;
    }
    if let Some(n) = a.images {
        cfg.protocol.images_per_eval = n;
    }
    cfg.mask.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(dir) = &a.flows {
        let r = protocol::sfc_from_flow_dir(dir, &cfg.mask)?;
        let row = dataio::SfcRow {
            scene: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            translation_magnitude: f64::NAN,
            n: r.sample_count,
            sfc: r.sfc,
            mean_flow_magnitude: r.mean_flow_magnitude,
            mask_source: r.mask_source.as_str().into(),
        };
        write_text(
            &out.join("sfc_rows.csv"),
            &dataio::sfc_rows_csv(std::slice::from_ref(&row)),
        )?;
        dataio::write_png(&out.join("mad.png"), &normalized(&r.mad_grid()), PngDepth::Sixteen)?;
        write_text(
            &out.join("sfc_report.json"),
            &dataio::json_report("sfc", &cfg.mask, &[&row])?,
        )?;
        return Ok(format!("sfc {:.6} over {} samples", r.sfc, r.sample_count));
    }
    check_sigmas(&cfg.sfc.sigmas)?;
    let dataset = a.dataset.as_ref().expect("clap requires dataset or flows");
    let data = protocol::load_dataset(dataset)?;
    let mut summary = Vec::new();
    let mut all_rows = BTreeMap::new();
    for &sigma in &cfg.sfc.sigmas {
        let gen = GeneratorSim::new(sigma, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
        let res = protocol::sfc_protocol(&data.sequences, &gen, &cfg.protocol, &cfg.mask, cfg.sfc.mask)?;
        let tag = sigma_tag(sigma);
        write_text(
            &out.join(format!("sfc_rows_{tag}.csv")),
            &dataio::sfc_rows_csv(&res.rows),
        )?;
        for (row, r) in res.rows.iter().zip(&res.results) {
            let name = format!("{}_m{}.png", row.scene, row.translation_magnitude);
            dataio::write_png(
                &out.join("mad").join(&tag).join(name),
                &normalized(&r.mad_grid()),
                PngDepth::Sixteen,
            )?;
        }
        let views = res.rows.len() / cfg.protocol.magnitudes.len();
        summary.extend(res.per_magnitude.iter().map(|&(m, v)| SfcSummaryRow {
            sigma,
            translation_magnitude: m,
            mean_sfc: v,
            views,
        }));
        all_rows.insert(tag, res.rows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sigma", "translation_magnitude", "mean_sfc", "views"])
        .expect("in-memory");
    for r in &summary {
        w.write_record([
            dataio::fmt9(r.sigma),
            dataio::fmt9(r.translation_magnitude),
            dataio::fmt9(r.mean_sfc),
            r.views.to_string(),
        ])
        .expect("in-memory");
    }
    write_text(
        &out.join("sfc_summary.csv"),
        &String::from_utf8(w.into_inner().expect("in-memory")).expect("utf8"),
    )?;
    let results = serde_json::json!({ "summary": summary, "rows": all_rows });
    write_text(
        &out.join("sfc_report.json"),
        &dataio::json_report("sfc", cfg, &results)?,
    )?;
    Ok(summary
        .iter()
        .map(|r| format!("sigma {} m {}: sfc {:.6}", r.sigma, r.translation_magnitude, r.mean_sfc))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn normalized(g: &crate::grid::ScalarGrid) -> crate::grid::ScalarGrid {
    let max = g.data().iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    if max > 0.0 {
        g.map(|v| v / max)
    } else {
        g.clone()
    }
}

pub fn cmd_ss_tsed(out: &Path, cfg: &mut RunConfig, a: &SsTsedArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if !a.sigmas.is_empty() {
        cfg.ss_tsed.sigmas = a.sigmas.clone();
    }
    if let Some(n) = a.pairs {
        cfg.protocol.pairs_per_image = n;
    }
    if let Some(n) = a.images {
        cfg.protocol.images_per_eval = n;
    }
    if let Some(m) = a.magnitude {
        cfg.tsed.translation_magnitude = m;
    }
    if let Some(n) = a.matches {
        cfg.ss_tsed.matches_per_pair = n;
    }
    check_sigmas(&cfg.ss_tsed.sigmas)?;
    cfg.tsed.validate()?;
    let data = protocol::load_dataset(&a.dataset)?;
    let mut curves = BTreeMap::new();
    let mut lines = Vec::new();
    for &sigma in &cfg.ss_tsed.sigmas {
        let gen = GeneratorSim::new(sigma, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
        let curve = protocol::ss_tsed_run(
            &data.sequences,
            &gen,
            &cfg.tsed,
            &cfg.protocol,
            cfg.ss_tsed.matches_per_pair,
        )?;
        let rows = dataio::curve_rows(&curve);
        let tag = sigma_tag(sigma);
        write_text(&out.join(format!("ss_tsed_{tag}.csv")), &dataio::curve_rows_csv(&rows))?;
        lines.push(format!(
            "sigma {sigma}: {:.1}% at {} px .. {:.1}% at {} px ({} pairs, {} skipped)",
            curve.pct_all[0],
            curve.thresholds[0],
            curve.pct_all[curve.pct_all.len() - 1],
            curve.thresholds[curve.thresholds.len() - 1],
            curve.pair_count,
            curve.skips
        ));
        curves.insert(tag, curve);
    }
    write_text(
        &out.join("ss_tsed_report.json"),
        &dataio::json_report("ss-tsed", cfg, &curves)?,
    )?;
    Ok(lines.join("\n"))
}

/// Reads either a learned-scales JSON (`{id: {beta, a, s}}`) or a plain
/// scale map (`{id: s}`).
pub fn read_scale_file(path: &Path, a: f64) -> Result<ScaleSet, CliError> {
    let text = String::from_utf8_lossy(&dataio::read_file(path)?).into_owned();
    let v = dataio::json_value(&text)?;
    if let Ok(map) = serde_json::from_value::<BTreeMap<String, f64>>(v.clone()) {
        return Ok(ScaleSet::from_scales(&map, a)?);
    }
    ScaleSet::from_json(&v).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct LearnSummary {
    scenes: usize,
    epochs: usize,
    final_loss: Option<f64>,
    delta_final: Option<f64>,
    delta_max: Option<f64>,
    recovery: Option<protocol::RecoveryStats>,
    correlation: Option<f64>,
}

pub fn cmd_scale_learn(out: &Path, cfg: &mut RunConfig, a: &ScaleLearnArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if let Some(n) = a.epochs {
        cfg.optimizer.epochs = n;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.optimizer.batch_size = b;
    }
    if let Some(s) = a.stride {
        cfg.learn.stride = s;
    }
    cfg.optimizer.validate()?;
    let data = protocol::load_dataset(&a.dataset)?;
    let init = match &a.reference {
        Some(path) => read_scale_file(path, cfg.learn.a)?,
        None => ScaleSet::uniform(
            data.sequences.iter().map(|s| s.scene.id.clone()),
            ScaleParam {
                beta: 0.0,
                a: cfg.learn.a,
            },
        ),
    };
    let seqs: Vec<_> = data
        .sequences
        .iter()
        .filter(|s| init.params.contains_key(&s.scene.id))
        .cloned()
        .collect();
    if seqs.is_empty() {
        return Err(CliError::Data("reference scales cover no dataset scene".into()));
    }
    let freeze: BTreeSet<String> = match a.freeze.as_deref() {
        None => BTreeSet::new(),
        Some("all") => seqs.iter().map(|s| s.scene.id.clone()).collect(),
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    let objective = protocol::photometric_objective(&seqs, &cfg.learn.magnitudes, cfg.learn.stride)?;
    let (learned, history) = optimize_scales(&objective, &init, &cfg.optimizer, &freeze)?;
    write_text(
        &out.join("scales.json"),
        &format!("{}\n", serde_json::to_string_pretty(&learned.to_json()).expect("json")),
    )?;
    write_text(&out.join("history.csv"), &dataio::history_csv(&history))?;
    let deltas = delta_scales(&history, 10).ok();
    if let Some(d) = &deltas {
        write_text(&out.join("delta_scales.csv"), &dataio::series_csv("delta", d))?;
    }
    let planted: BTreeMap<String, f64> = serde_json::from_slice(&dataio::read_file(&a.dataset.join("scales.json"))?)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let correlation = match &a.compare {
        Some(path) => Some(log_scale_correlation(&learned, &read_scale_file(path, cfg.learn.a)?)?),
        None => None,
    };
    let summary = LearnSummary {
        scenes: seqs.len(),
        epochs: history.len(),
        final_loss: history.losses.last().copied(),
        delta_final: deltas.as_ref().and_then(|d| d.last().copied()),
        delta_max: deltas.as_ref().map(|d| d.iter().copied().fold(0.0, f64::max)),
        recovery: protocol::recovery_stats(&learned, &planted),
        correlation,
    };
    write_text(
        &out.join("scale_learn_report.json"),
        &dataio::json_report("scale-learn", cfg, &summary)?,
    )?;
    let mut msg = format!("learned {} scales over {} epochs", seqs.len(), history.len());
    if let Some(r) = summary.recovery {
        msg.push_str(&format!("; max |log(s/s*)| = {:.4}", r.max_abs_log_error));
    }
    if let Some(c) = correlation {
        msg.push_str(&format!("; log-scale correlation {c:.4}"));
    }
    Ok(msg)
}

#[derive(Serialize)]
struct CalibrationReport {
    calibrations: Vec<crate::depth_calib::SceneCalibration>,
    scale_map: BTreeMap<String, f64>,
    retained: BTreeSet<String>,
    flagged_match_injected: Option<bool>,
}

pub fn cmd_calibrate(out: &Path, cfg: &mut RunConfig, a: &CalibrateArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if let Some(f) = a.unreliable_fraction {
        cfg.calibrate.policy.unreliable_fraction = f;
    }
    if let Some(p) = a.policy {
        cfg.calibrate.policy.mode = match p {
            PolicyArg::Trim => PolicyMode::Trim,
            PolicyArg::FallbackOne => PolicyMode::FallbackOne,
        };
    }
    if a.log_space {
        cfg.calibrate.fit_space = FitSpace::Log;
    }
    let fraction = cfg.calibrate.policy.unreliable_fraction;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CalibError::InvalidFraction(fraction).into());
    }
    let mut samples = BTreeMap::new();
    let mut injected: Option<BTreeSet<String>> = None;
    if let Some(dir) = &a.dataset {
        let manifest = protocol::read_manifest(dir)?;
        for id in &manifest.scenes {
            samples.insert(id.clone(), protocol::load_depth_pairs(dir, id)?);
        }
        if let Ok(bytes) = dataio::read_file(&dir.join("outliers.json")) {
            injected = serde_json::from_slice(&bytes).ok();
        }
    } else if let Some(dir) = &a.pairs {
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| DataError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        names.sort();
        for p in names {
            let text = String::from_utf8_lossy(&dataio::read_file(&p)?).into_owned();
            let id = p.file_stem().expect("csv file").to_string_lossy().into_owned();
            samples.insert(
                id,
                dataio::parse_depth_pairs_csv(&text)?
                    .into_iter()
                    .map(|(_, s)| s)
                    .collect(),
            );
        }
    }
    let calibs = calibrate_scenes(&samples, cfg.calibrate.fit_space)?;
    let flagged = reliability_partition(&calibs, fraction)?;
    let (scale_map, retained) = apply_policy(&flagged, &cfg.calibrate.policy)?;
    let unreliable: BTreeSet<String> = flagged
        .iter()
        .filter(|c| c.reliable == Some(false))
        .map(|c| c.id.clone())
        .collect();
    let report = CalibrationReport {
        flagged_match_injected: injected.map(|inj| inj == unreliable),
        calibrations: flagged,
        scale_map: scale_map.clone(),
        retained,
    };
    write_text(
        &out.join("calibration.json"),
        &dataio::json_report("calibrate", cfg, &report)?,
    )?;
    write_text(
        &out.join("scale_map.json"),
        &format!("{}\n", serde_json::to_string_pretty(&scale_map).expect("json")),
    )?;
    Ok(format!(
        "calibrated {} scenes, {} flagged unreliable, {} in scale map",
        samples.len(),
        unreliable.len(),
        scale_map.len()
    ))
}

#[derive(Serialize)]
struct HeatmapEntry {
    scene: String,
    sigma: f64,
    entropy: f64,
}

pub fn cmd_edge_heatmap(out: &Path, cfg: &mut RunConfig, a: &EdgeHeatmapArgs) -> Result<String, CliError> {
    sync_seeds(cfg);
    if !a.sigmas.is_empty() {
        cfg.heatmap.sigmas = a.sigmas.clone();
    }
    if let Some(n) = a.samples {
        cfg.heatmap.samples = n;
    }
    if let Some(m) = a.magnitude {
        cfg.heatmap.magnitude = m;
    }
    if let Some(dir) = &a.images {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| DataError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(|p| dataio::read_png(p))
            .collect::<Result<Vec<_>, _>>()?;
        let map = crate::flow_metrics::edge_heatmap(&images).map_err(|e| CliError::Data(e.to_string()))?;
        dataio::write_png(&out.join("heatmap.png"), &map, PngDepth::Sixteen)?;
        return Ok(format!(
            "heatmap over {} images, entropy {:.4}",
            images.len(),
            protocol::heatmap_entropy(&map)
        ));
    }
    check_sigmas(&cfg.heatmap.sigmas)?;
    if cfg.heatmap.samples == 0 || !(cfg.heatmap.magnitude > 0.0) {
        return Err(CliError::Config(
            "heatmap needs samples >= 1 and a positive magnitude".into(),
        ));
    }
    let data = protocol::load_dataset(a.dataset.as_ref().expect("clap requires dataset or images"))?;
    let views = &data.sequences[..data.sequences.len().min(cfg.protocol.images_per_eval)];
    let mut entries = Vec::new();
    for &sigma in &cfg.heatmap.sigmas {
        let gen = GeneratorSim::new(sigma, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
        for seq in views {
            let map = protocol::sample_heatmap(seq, &gen, cfg.heatmap.magnitude, cfg.heatmap.samples)?;
            let path = out
                .join("heatmaps")
                .join(sigma_tag(sigma))
                .join(format!("{}.png", seq.scene.id));
            dataio::write_png(&path, &map, PngDepth::Sixteen)?;
            entries.push(HeatmapEntry {
                scene: seq.scene.id.clone(),
                sigma,
                entropy: protocol::heatmap_entropy(&map),
            });
        }
    }
    write_text(
        &out.join("edge_heatmap_report.json"),
        &dataio::json_report("edge-heatmap", cfg, &entries)?,
    )?;
    Ok(format!("wrote {} heatmaps", entries.len()))
}
