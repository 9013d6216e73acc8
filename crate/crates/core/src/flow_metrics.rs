//! Sample Flow Consistency (SFC): forward-backward masking, flow
//! normalization, per-pixel median absolute deviation and its median.
//!
//! Inputs are flows from a conditioning frame to each of `n` generated
//! samples (plus the matching backward flows). The per-pixel deviation is
//! taken over the samples whose cycle-consistency mask keeps that pixel.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FlowField, Grid, GridError, Mask, ScalarGrid};
use crate::stats::median_in_place;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowMetricsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid mask config: {0}")]
    InvalidConfig(String),
    #[error("no valid flow support")]
    NoValidSupport,
    #[error("degenerate zero flow (mean magnitude {0:e})")]
    DegenerateZeroFlow(f64),
    #[error("non-finite flow at unmasked pixel ({x}, {y}) of sample {sample}")]
    NonFiniteFlow { sample: usize, x: usize, y: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("mask list is empty")]
    EmptyMaskList,
    #[error("{flows} flows but {masks} masks")]
    CountMismatch { flows: usize, masks: usize },
    #[error("mask selects no valid MAD pixel")]
    EmptySupport,
    #[error("image list is empty")]
    NoImages,
}

/// Sign used when combining forward and backward flow in the cycle check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleSign {
    /// `d = f_fwd(P) + f_bwd(P + f_fwd(P))`; zero for a consistent pair.
    #[default]
    Sum,
    /// `d = f_fwd(P) - f_bwd(P + f_fwd(P))`, kept for comparison runs.
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    /// Cycle-consistency threshold in pixels on `max(|d.x|, |d.y|)`.
    pub threshold_t: f64,
    /// Consensus vote fraction that must be strictly exceeded.
    pub consensus_epsilon: f64,
    pub cycle_sign: CycleSign,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            threshold_t: 1.5,
            consensus_epsilon: 0.5,
            cycle_sign: CycleSign::Sum,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), FlowMetricsError> {
        if !(self.threshold_t > 0.0) {
            return Err(FlowMetricsError::InvalidConfig(format!(
                "threshold_t must be > 0, got {}",
                self.threshold_t
            )));
        }
        if !(self.consensus_epsilon > 0.0 && self.consensus_epsilon < 1.0) {
            return Err(FlowMetricsError::InvalidConfig(format!(
                "consensus_epsilon must lie in (0, 1), got {}",
                self.consensus_epsilon
            )));
        }
        Ok(())
    }
}

/// Bilinear interpolation of any grid of vector-space values. `None` when
/// `p` is outside `[0, W-1] x [0, H-1]` or not finite.
pub fn bilinear<T>(grid: &Grid<T>, p: &Vector2<f64>) -> Option<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let (w, h) = grid.dims();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= xmax && p.y <= ymax) {
        return None;
    }
    let x0 = p.x.floor() as usize;
    let y0 = p.y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = p.x - x0 as f64;
    let ay = p.y - y0 as f64;
    let top = *grid.get(x0, y0) * (1.0 - ax) + *grid.get(x1, y0) * ax;
    let bottom = *grid.get(x0, y1) * (1.0 - ax) + *grid.get(x1, y1) * ax;
    Some(top * (1.0 - ay) + bottom * ay)
}

pub fn bilinear_sample(f: &FlowField, p: &Vector2<f64>) -> Option<Vector2<f64>> {
    bilinear(f, p)
}

/// Forward-backward cycle-consistency mask. Pixels whose forward target
/// leaves the frame, or whose cycle residual exceeds `threshold_t` in its
/// largest component, are masked out.
pub fn fb_consistency_mask(f_fwd: &FlowField, f_bwd: &FlowField, cfg: &MaskConfig) -> Result<Mask, FlowMetricsError> {
    cfg.validate()?;
    f_fwd.ensure_same_dims(f_bwd)?;
    let (w, h) = f_fwd.dims();
    let rows: Vec<Vec<bool>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let fwd = *f_fwd.get(x, y);
                    if !(fwd.x.is_finite() && fwd.y.is_finite()) {
                        return false;
                    }
                    let target = Vector2::new(x as f64, y as f64) + fwd;
                    let Some(back) = bilinear_sample(f_bwd, &target) else {
                        return false;
                    };
                    let d = match cfg.cycle_sign {
                        CycleSign::Sum => fwd + back,
                        CycleSign::Difference => fwd - back,
                    };
                    // NaN residuals compare false here and stay masked.
                    d.x.abs().max(d.y.abs()) <= cfg.threshold_t
                })
                .collect()
        })
        .collect();
    Ok(Grid::from_vec(w, h, rows.concat())?)
}

/// Pixel is kept iff the fraction of masks keeping it strictly exceeds `epsilon`.
pub fn consensus_mask(masks: &[Mask], epsilon: f64) -> Result<Mask, FlowMetricsError> {
    let first = masks.first().ok_or(FlowMetricsError::EmptyMaskList)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(FlowMetricsError::InvalidConfig(format!(
            "consensus epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    for m in &masks[1..] {
        first.ensure_same_dims(m)?;
    }
    let n = masks.len() as f64;
    let (w, h) = first.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        let votes = masks.iter().filter(|m| *m.get(x, y)).count() as f64;
        votes / n > epsilon
    }))
}

fn check_counts(flows: &[FlowField], masks: &[Mask]) -> Result<(), FlowMetricsError> {
    if flows.len() != masks.len() {
        return Err(FlowMetricsError::CountMismatch {
            flows: flows.len(),
            masks: masks.len(),
        });
    }
    if let Some(first) = flows.first() {
        for (f, m) in flows.iter().zip(masks) {
            first.ensure_same_dims(f)?;
            first.ensure_same_dims(m)?;
        }
    }
    Ok(())
}

/// Divides every flow by `f_bar`, the mean L2 magnitude over all samples'
/// unmasked pixels. Returns the normalized flows and `f_bar`.
pub fn normalize_flows(flows: &[FlowField], masks: &[Mask]) -> Result<(Vec<FlowField>, f64), FlowMetricsError> {
    check_counts(flows, masks)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (f, m)) in flows.iter().zip(masks).enumerate() {
        for ((x, y, v), &keep) in f.iter_indexed().zip(m.data()) {
            if !keep {
                continue;
            }
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(FlowMetricsError::NonFiniteFlow { sample: i, x, y });
            }
            sum += v.norm();
            count += 1;
        }
    }
    if count == 0 {
        return Err(FlowMetricsError::NoValidSupport);
    }
    let f_bar = sum / count as f64;
    if f_bar < 1e-9 {
        return Err(FlowMetricsError::DegenerateZeroFlow(f_bar));
    }
    let normalized = flows.iter().map(|f| f.map(|v| v / f_bar)).collect();
    Ok((normalized, f_bar))
}

/// Per-pixel median absolute deviation; `None` where fewer than two
/// samples are unmasked.
pub type MadMap = Grid<Option<f64>>;

pub fn mad_map(normalized: &[FlowField], masks: &[Mask]) -> Result<MadMap, FlowMetricsError> {
    if normalized.len() < 2 {
        return Err(FlowMetricsError::TooFewSamples(normalized.len()));
    }
    check_counts(normalized, masks)?;
    let (w, h) = normalized[0].dims();
    let rows: Vec<Vec<Option<f64>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut selected: Vec<Vector2<f64>> = Vec::with_capacity(normalized.len());
            let mut deviations: Vec<f64> = Vec::with_capacity(normalized.len());
            (0..w)
                .map(|x| {
                    selected.clear();
                    selected.extend(
                        normalized
                            .iter()
                            .zip(masks)
                            .filter(|(_, m)| *m.get(x, y))
                            .map(|(f, _)| *f.get(x, y)),
                    );
                    if selected.len() < 2 {
                        return None;
                    }
                    let mean = selected.iter().sum::<Vector2<f64>>() / selected.len() as f64;
                    deviations.clear();
                    deviations.extend(selected.iter().map(|v| (v - mean).norm()));
                    median_in_place(&mut deviations)
                })
                .collect()
        })
        .collect();
    Ok(Grid::from_vec(w, h, rows.concat())?)
}

/// Median of the MAD map over pixels kept by `m_star` with a valid MAD.
pub fn sfc(mad: &MadMap, m_star: &Mask) -> Result<f64, FlowMetricsError> {
    mad.ensure_same_dims(m_star)?;
    let mut vals: Vec<f64> = mad
        .data()
        .iter()
        .zip(m_star.data())
        .filter_map(|(v, &keep)| if keep { *v } else { None })
        .collect();
    median_in_place(&mut vals).ok_or(FlowMetricsError::EmptySupport)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    GroundTruth,
    Consensus,
}

impl MaskSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskSource::GroundTruth => "ground_truth",
            MaskSource::Consensus => "consensus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    pub fwd: FlowField,
    pub bwd: FlowField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfcResult {
    pub sfc: f64,
    pub mad_map: MadMap,
    pub mean_flow_magnitude: f64,
    pub sample_count: usize,
    pub mask_source: MaskSource,
    pub m_star: Mask,
    pub sample_masks: Vec<Mask>,
}

impl SfcResult {
    /// MAD map with invalid pixels set to zero.
    pub fn mad_grid(&self) -> ScalarGrid {
        self.mad_map.map(|v| v.unwrap_or(0.0))
    }
}

/// SFC from flows whose per-sample masks and aggregate mask are already known.
pub fn sfc_from_masks(
    flows: &[FlowField],
    masks: Vec<Mask>,
    m_star: Mask,
    mask_source: MaskSource,
) -> Result<SfcResult, FlowMetricsError> {
    if flows.len() < 2 {
        return Err(FlowMetricsError::TooFewSamples(flows.len()));
    }
    let (normalized, f_bar) = normalize_flows(flows, &masks)?;
    let mad = mad_map(&normalized, &masks)?;
    let value = sfc(&mad, &m_star)?;
    Ok(SfcResult {
        sfc: value,
        mad_map: mad,
        mean_flow_magnitude: f_bar,
        sample_count: flows.len(),
        mask_source,
        m_star,
        sample_masks: masks,
    })
}

/// Full SFC: per-sample cycle masks, ground-truth or consensus aggregate
/// mask, normalization, MAD map and its median.
pub fn sfc_pipeline(
    samples: &[FlowPair],
    ground_truth: Option<&FlowPair>,
    cfg: &MaskConfig,
) -> Result<SfcResult, FlowMetricsError> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(FlowMetricsError::TooFewSamples(samples.len()));
    }
    let masks = samples
        .par_iter()
        .map(|p| fb_consistency_mask(&p.fwd, &p.bwd, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let (m_star, source) = match ground_truth {
        Some(gt) => (fb_consistency_mask(&gt.fwd, &gt.bwd, cfg)?, MaskSource::GroundTruth),
        None => (consensus_mask(&masks, cfg.consensus_epsilon)?, MaskSource::Consensus),
    };
    let flows: Vec<FlowField> = samples.iter().map(|p| p.fwd.clone()).collect();
    sfc_from_masks(&flows, masks, m_star, source)
}

/// Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(img: &ScalarGrid) -> ScalarGrid {
    let (w, h) = img.dims();
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        *img.get(xc, yc)
    };
    Grid::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Mean Sobel response over a set of images, scaled so its maximum is 1.
/// An all-zero response stays zero.
pub fn edge_heatmap(images: &[ScalarGrid]) -> Result<ScalarGrid, FlowMetricsError> {
    let first = images.first().ok_or(FlowMetricsError::NoImages)?;
    for img in &images[1..] {
        first.ensure_same_dims(img)?;
    }
    let responses: Vec<ScalarGrid> = images.par_iter().map(sobel_magnitude).collect();
    let n = images.len() as f64;
    let (w, h) = first.dims();
    let mut mean = Grid::filled(w, h, 0.0);
    for r in &responses {
        for (acc, v) in mean.data_mut().iter_mut().zip(r.data()) {
            *acc += v;
        }
    }
    for v in mean.data_mut() {
        *v /= n;
    }
    let max = mean.data().iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in mean.data_mut() {
            *v /= max;
        }
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_flow(w: usize, h: usize, u: f64, v: f64) -> FlowField {
        Grid::filled(w, h, Vector2::new(u, v))
    }

    fn full(w: usize, h: usize) -> Mask {
        Grid::filled(w, h, true)
    }

    #[test]
    fn bilinear_cases() {
        let f = Grid::from_fn(2, 2, |x, y| Vector2::new(2.0 * x as f64, y as f64));
        assert_eq!(
            bilinear_sample(&f, &Vector2::new(1.0, 1.0)),
            Some(Vector2::new(2.0, 1.0))
        );
        assert_eq!(
            bilinear_sample(&f, &Vector2::new(0.5, 0.0)),
            Some(Vector2::new(1.0, 0.0))
        );
        assert_eq!(bilinear_sample(&f, &Vector2::new(-0.1, 0.0)), None);
        assert_eq!(bilinear_sample(&f, &Vector2::new(0.0, 1.0001)), None);
        assert_eq!(bilinear_sample(&f, &Vector2::new(f64::NAN, 0.0)), None);
    }

    #[test]
    fn consistent_constant_flow_masks_only_exits() {
        let (w, h) = (8, 5);
        let cfg = MaskConfig::default();
        let m = fb_consistency_mask(&constant_flow(w, h, 2.0, 0.0), &constant_flow(w, h, -2.0, 0.0), &cfg).unwrap();
        for (x, _, &keep) in m.iter_indexed() {
            assert_eq!(keep, x < w - 2, "column {x}");
        }
        let m = fb_consistency_mask(&constant_flow(w, h, 2.0, 0.0), &constant_flow(w, h, -4.0, 0.0), &cfg).unwrap();
        assert_eq!(m.count_true(), 0);
    }

    #[test]
    fn difference_sign_flags_consistent_pairs() {
        let (w, h) = (8, 5);
        let cfg = MaskConfig {
            cycle_sign: CycleSign::Difference,
            ..MaskConfig::default()
        };
        let m = fb_consistency_mask(&constant_flow(w, h, 2.0, 0.0), &constant_flow(w, h, -2.0, 0.0), &cfg).unwrap();
        assert_eq!(m.count_true(), 0);
    }

    #[test]
    fn infinite_threshold_keeps_in_bounds() {
        let cfg = MaskConfig {
            threshold_t: f64::INFINITY,
            ..MaskConfig::default()
        };
        let m = fb_consistency_mask(&constant_flow(6, 4, 1.0, 1.0), &constant_flow(6, 4, 5.0, 5.0), &cfg).unwrap();
        for (x, y, &keep) in m.iter_indexed() {
            assert_eq!(keep, x < 5 && y < 3);
        }
    }

    #[test]
    fn fb_mask_rejects_mismatched_dims() {
        let err = fb_consistency_mask(
            &constant_flow(4, 4, 0.0, 0.0),
            &constant_flow(4, 5, 0.0, 0.0),
            &MaskConfig::default(),
        );
        assert!(matches!(err, Err(FlowMetricsError::Grid(_))));
    }

    #[test]
    fn consensus_votes() {
        let a = Grid::from_vec(3, 1, vec![true, true, false]).unwrap();
        let b = Grid::from_vec(3, 1, vec![true, false, false]).unwrap();
        let c = Grid::from_vec(3, 1, vec![false, true, true]).unwrap();
        let m = consensus_mask(&[a.clone(), b.clone(), c], 0.5).unwrap();
        assert_eq!(m.data(), &[true, true, false]);
        let m = consensus_mask(&[a.clone(), b], 0.5).unwrap();
        assert_eq!(m.data(), &[true, false, false]);
        for eps in [0.1, 0.5, 0.9] {
            assert_eq!(consensus_mask(&[a.clone(), a.clone()], eps).unwrap(), a);
        }
        assert_eq!(consensus_mask(&[], 0.5), Err(FlowMetricsError::EmptyMaskList));
    }

    #[test]
    fn normalization_hand_case() {
        let flows = [constant_flow(4, 3, 1.0, 0.0), constant_flow(4, 3, 3.0, 0.0)];
        let masks = [full(4, 3), full(4, 3)];
        let (n, f_bar) = normalize_flows(&flows, &masks).unwrap();
        assert_eq!(f_bar, 2.0);
        assert_eq!(*n[0].get(1, 1), Vector2::new(0.5, 0.0));
        assert_eq!(*n[1].get(3, 2), Vector2::new(1.5, 0.0));
    }

    #[test]
    fn normalization_errors() {
        let flows = [constant_flow(2, 2, 1.0, 0.0)];
        assert_eq!(
            normalize_flows(&flows, &[Grid::filled(2, 2, false)]),
            Err(FlowMetricsError::NoValidSupport)
        );
        let zero = [constant_flow(2, 2, 0.0, 0.0)];
        assert!(matches!(
            normalize_flows(&zero, &[full(2, 2)]),
            Err(FlowMetricsError::DegenerateZeroFlow(_))
        ));
    }

    #[test]
    fn single_flow_normalizes_to_unit_mean() {
        let f = Grid::from_fn(5, 4, |x, y| Vector2::new(x as f64 + 0.5, y as f64 * 0.3));
        let (n, _) = normalize_flows(&[f], &[full(5, 4)]).unwrap();
        let mean = n[0].data().iter().map(|v| v.norm()).sum::<f64>() / 20.0;
        assert!((mean - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mad_hand_cases() {
        let masks2 = [full(3, 2), full(3, 2)];
        let mad = mad_map(&[constant_flow(3, 2, 0.5, 0.0), constant_flow(3, 2, 1.5, 0.0)], &masks2).unwrap();
        assert!(mad.data().iter().all(|v| *v == Some(0.5)));

        let masks3 = [full(3, 2), full(3, 2), full(3, 2)];
        let flows = [
            constant_flow(3, 2, 0.5, 0.0),
            constant_flow(3, 2, 0.5, 0.0),
            constant_flow(3, 2, 2.0, 0.0),
        ];
        let mad = mad_map(&flows, &masks3).unwrap();
        assert!(mad.data().iter().all(|v| *v == Some(0.5)));

        let same = mad_map(&[constant_flow(3, 2, 0.7, 0.1), constant_flow(3, 2, 0.7, 0.1)], &masks2).unwrap();
        assert!(same.data().iter().all(|v| *v == Some(0.0)));
        assert_eq!(
            mad_map(&flows[..1], &masks3[..1]),
            Err(FlowMetricsError::TooFewSamples(1))
        );
    }

    #[test]
    fn mad_excludes_pixels_with_single_sample() {
        let mut m = full(2, 1);
        *m.get_mut(0, 0) = false;
        let mad = mad_map(
            &[constant_flow(2, 1, 1.0, 0.0), constant_flow(2, 1, 2.0, 0.0)],
            &[m, full(2, 1)],
        )
        .unwrap();
        assert_eq!(*mad.get(0, 0), None);
        assert_eq!(*mad.get(1, 0), Some(0.5));
    }

    #[test]
    fn sfc_cases() {
        let mad = Grid::filled(4, 4, Some(0.5));
        assert_eq!(sfc(&mad, &full(4, 4)).unwrap(), 0.5);
        let checker = Grid::from_fn(4, 4, |x, y| Some(if (x + y) % 2 == 0 { 0.2 } else { 0.8 }));
        assert!((sfc(&checker, &full(4, 4)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            sfc(&mad, &Grid::filled(4, 4, false)),
            Err(FlowMetricsError::EmptySupport)
        );
    }

    #[test]
    fn pipeline_hand_oracle() {
        let (w, h) = (6, 6);
        let pair = |u: f64| FlowPair {
            fwd: constant_flow(w, h, u, 0.0),
            bwd: constant_flow(w, h, -u, 0.0),
        };
        // Full masks pin the hand values; cycle masks would drop exit columns.
        let flows = [constant_flow(w, h, 1.0, 0.0), constant_flow(w, h, 3.0, 0.0)];
        let r = sfc_from_masks(
            &flows,
            vec![full(w, h), full(w, h)],
            full(w, h),
            MaskSource::GroundTruth,
        )
        .unwrap();
        assert_eq!(r.mean_flow_magnitude, 2.0);
        assert!((r.sfc - 0.5).abs() < 1e-12);

        let gt = pair(1.0);
        let r = sfc_pipeline(&[pair(1.0), pair(1.0), pair(1.0)], Some(&gt), &MaskConfig::default()).unwrap();
        assert_eq!(r.sfc, 0.0);
        assert_eq!(r.mask_source, MaskSource::GroundTruth);
        let r = sfc_pipeline(&[pair(1.0), pair(1.0)], None, &MaskConfig::default()).unwrap();
        assert_eq!(r.mask_source, MaskSource::Consensus);
        assert!(matches!(
            sfc_pipeline(&[pair(1.0)], None, &MaskConfig::default()),
            Err(FlowMetricsError::TooFewSamples(1))
        ));
    }

    #[test]
    fn sobel_step_edge_oracle() {
        // Direct 3x3 convolution: columns 3 and 4 straddle the step.
        let img = Grid::from_fn(8, 5, |x, _| if x >= 4 { 1.0 } else { 0.0 });
        let heat = edge_heatmap(std::slice::from_ref(&img)).unwrap();
        for (x, _, &v) in heat.iter_indexed() {
            if x == 3 || x == 4 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        let many = edge_heatmap(&[img.clone(), img.clone(), img]).unwrap();
        assert_eq!(many, heat);
    }

    #[test]
    fn constant_image_has_no_edges() {
        let heat = edge_heatmap(&[Grid::filled(5, 5, 0.3)]).unwrap();
        assert!(heat.data().iter().all(|&v| v == 0.0));
        assert_eq!(edge_heatmap(&[]), Err(FlowMetricsError::NoImages));
    }
}
