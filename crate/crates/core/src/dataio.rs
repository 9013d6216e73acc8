//! File formats: camera trajectory text, Middlebury `.flo`, PFM, grayscale
//! PNG, and CSV/JSON reports.

use std::io::Cursor;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_calib::DepthPairSample;
use crate::geometry::{Camera, Intrinsics, Pose};
use crate::grid::{FlowField, Grid, ScalarGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("trajectory line {line}: {message}")]
    Trajectory { line: usize, message: String },
    #[error("flow file: bad magic {found} at byte 0")]
    FlowMagic { found: f32 },
    #[error("flow file: invalid dimensions {width}x{height} at byte 4")]
    FlowDimensions { width: i32, height: i32 },
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing data: expected {expected} bytes, got {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("PFM header at byte {offset}: {message}")]
    PfmHeader { offset: usize, message: String },
    #[error("dimensions {width}x{height} overflow")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("png: {0}")]
    Png(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("json: {0}")]
    Json(String),
}

impl DataError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

// ---------------------------------------------------------------------------
// Trajectory text

/// Maximum deviation of `R Rᵀ` from identity accepted in trajectory files.
pub const ROTATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub timestamp_us: i64,
    /// `fx, fy, cx, cy` as fractions of image width/height.
    pub intrinsics: [f64; 4],
    pub reserved: [f64; 2],
    /// Row-major 3x4 world-to-camera matrix.
    pub pose: [f64; 12],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub source: String,
    pub frames: Vec<TrajectoryFrame>,
}

impl TrajectoryFrame {
    pub fn rotation(&self) -> Matrix3<f64> {
        let p = &self.pose;
        Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.pose[3], self.pose[7], self.pose[11])
    }

    /// Pixel intrinsics for an image of `width x height`. Normalized
    /// coordinates put pixel centers at `i + 0.5`, pixels here at `i`.
    pub fn pixel_intrinsics(&self, width: u32, height: u32) -> Result<Intrinsics, crate::geometry::GeometryError> {
        let [fx, fy, cx, cy] = self.intrinsics;
        let (w, h) = (width as f64, height as f64);
        Intrinsics::new(fx * w, fy * h, cx * w - 0.5, cy * h - 0.5, width, height)
    }

    pub fn camera(&self, width: u32, height: u32) -> Result<Camera, crate::geometry::GeometryError> {
        Ok(Camera::new(
            self.pixel_intrinsics(width, height)?,
            Pose::from_approx_rotation(self.rotation(), self.translation())?,
        ))
    }

    pub fn from_camera(cam: &Camera, timestamp_us: i64) -> Self {
        let k = &cam.intrinsics;
        let (w, h) = (k.width as f64, k.height as f64);
        let r = &cam.pose.rotation;
        let t = &cam.pose.translation;
        Self {
            timestamp_us,
            intrinsics: [k.fx / w, k.fy / h, (k.cx + 0.5) / w, (k.cy + 0.5) / h],
            reserved: [0.0, 0.0],
            pose: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                t.x,
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                t.y,
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
                t.z,
            ],
        }
    }
}

fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    (r * r.transpose() - Matrix3::identity()).abs().max()
}

/// Parses a trajectory: one source line, then one frame of 19 numbers per
/// line. CRLF endings and blank lines are tolerated.
pub fn parse_trajectory(text: &str) -> Result<TrajectoryFile, DataError> {
    let mut lines = text.lines().enumerate();
    let source = match lines.next() {
        Some((_, l)) => l.trim_end_matches('\r').to_string(),
        None => {
            return Err(DataError::Trajectory {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let mut frames: Vec<TrajectoryFrame> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let err = |message: String| DataError::Trajectory { line, message };
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 19 {
            return Err(err(format!("expected 19 fields, found {}", fields.len())));
        }
        let timestamp_us: i64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad timestamp {:?}", fields[0])))?;
        let mut nums = [0.0; 18];
        for (i, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| err(format!("field {}: bad number {f:?}", i + 2)))?;
            if !v.is_finite() {
                return Err(err(format!("field {}: non-finite value", i + 2)));
            }
            nums[i] = v;
        }
        let frame = TrajectoryFrame {
            timestamp_us,
            intrinsics: [nums[0], nums[1], nums[2], nums[3]],
            reserved: [nums[4], nums[5]],
            pose: nums[6..18].try_into().expect("12 pose values"),
        };
        let dev = rotation_deviation(&frame.rotation());
        if !(dev <= ROTATION_TOLERANCE) {
            return Err(err(format!("rotation not orthonormal (deviation {dev:.3e})")));
        }
        if let Some(prev) = frames.last() {
            if timestamp_us <= prev.timestamp_us {
                return Err(err(format!(
                    "timestamp {timestamp_us} does not increase (previous {})",
                    prev.timestamp_us
                )));
            }
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(DataError::Trajectory {
            line: 2,
            message: "no frames".into(),
        });
    }
    Ok(TrajectoryFile { source, frames })
}

/// Float with 17 significant digits, exact under parsing.
fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn serialize_trajectory(t: &TrajectoryFile) -> String {
    let mut out = String::new();
    out.push_str(&t.source);
    out.push('\n');
    for f in &t.frames {
        let mut fields = vec![f.timestamp_us.to_string()];
        fields.extend(f.intrinsics.iter().chain(&f.reserved).chain(&f.pose).map(|&v| f17(v)));
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Middlebury .flo

pub const FLO_MAGIC: f32 = 202021.25;

fn payload_size(width: u64, height: u64, bytes_per_cell: u64) -> Result<usize, DataError> {
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bytes_per_cell))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(DataError::DimensionOverflow { width, height })
}

/// Flow values are stored as `f32`.
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for v in flow.data() {
        out.extend_from_slice(&(v.x as f32).to_le_bytes());
        out.extend_from_slice(&(v.y as f32).to_le_bytes());
    }
    out
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes(b.try_into().expect("4 bytes"))
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField, DataError> {
    if bytes.len() < 12 {
        return Err(DataError::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let magic = le_f32(&bytes[0..4]);
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(DataError::FlowMagic { found: magic });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let height = i32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if width < 0 || height < 0 {
        return Err(DataError::FlowDimensions { width, height });
    }
    let expected =
        payload_size(width as u64, height as u64, 8)?
            .checked_add(12)
            .ok_or(DataError::DimensionOverflow {
                width: width as u64,
                height: height as u64,
            })?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[12..]
        .chunks_exact(8)
        .map(|c| Vector2::new(le_f32(&c[0..4]) as f64, le_f32(&c[4..8]) as f64))
        .collect();
    Ok(Grid::from_vec(width as usize, height as usize, data).expect("size checked"))
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<(), DataError> {
    write_file(path, &encode_flow(flow))
}

pub fn read_flow(path: &Path) -> Result<FlowField, DataError> {
    decode_flow(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// PFM

/// Grayscale PFM, little-endian, rows stored bottom to top.
pub fn encode_pfm(grid: &ScalarGrid) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(*grid.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ScalarGrid, DataError> {
    // Three whitespace-terminated header tokens after the magic line.
    let mut pos = 0;
    let mut token = |what: &str| -> Result<(usize, String), DataError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() || pos - start > 64 {
            return Err(DataError::PfmHeader {
                offset: start,
                message: format!("missing {what}"),
            });
        }
        let s = std::str::from_utf8(&bytes[start..pos]).map_err(|_| DataError::PfmHeader {
            offset: start,
            message: format!("{what} is not ASCII"),
        })?;
        let s = s.to_string();
        pos += 1; // the single whitespace byte ending the token
        Ok((start, s))
    };
    let (off, magic) = token("magic")?;
    if magic != "Pf" {
        return Err(DataError::PfmHeader {
            offset: off,
            message: format!("expected \"Pf\", found {magic:?}"),
        });
    }
    let mut dim = |what: &str| -> Result<u64, DataError> {
        let (off, s) = token(what)?;
        s.parse::<u64>().map_err(|_| DataError::PfmHeader {
            offset: off,
            message: format!("bad {what} {s:?}"),
        })
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (off, scale) = token("scale")?;
    let scale: f64 = scale.parse().map_err(|_| DataError::PfmHeader {
        offset: off,
        message: format!("bad scale {scale:?}"),
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(DataError::PfmHeader {
            offset: off,
            message: "scale must be nonzero".into(),
        });
    }
    let little = scale < 0.0;
    let header = pos;
    let expected = payload_size(width, height, 4)?
        .checked_add(header)
        .ok_or(DataError::DimensionOverflow { width, height })?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            expected,
            actual: bytes.len(),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let vals: Vec<f64> = bytes[header..]
        .chunks_exact(4)
        .map(|c| {
            let b: [u8; 4] = c.try_into().expect("4 bytes");
            (if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }) as f64
        })
        .collect();
    Ok(Grid::from_fn(w, h, |x, y| vals[(h - 1 - y) * w + x]))
}

pub fn write_pfm(path: &Path, grid: &ScalarGrid) -> Result<(), DataError> {
    write_file(path, &encode_pfm(grid))
}

pub fn read_pfm(path: &Path) -> Result<ScalarGrid, DataError> {
    decode_pfm(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Grayscale PNG

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

/// Encodes values in `[0, 1]` (clamped; NaN as 0).
pub fn encode_png(grid: &ScalarGrid, depth: PngDepth) -> Result<Vec<u8>, DataError> {
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    let q = |v: f64, max: f64| {
        if v.is_nan() {
            0.0
        } else {
            (v.clamp(0.0, 1.0) * max).round()
        }
    };
    let mut out = Cursor::new(Vec::new());
    let res = match depth {
        PngDepth::Eight => {
            let px: Vec<u8> = grid.data().iter().map(|&v| q(v, 255.0) as u8).collect();
            image::GrayImage::from_raw(w, h, px)
                .expect("sized")
                .write_to(&mut out, image::ImageFormat::Png)
        }
        PngDepth::Sixteen => {
            let px: Vec<u16> = grid.data().iter().map(|&v| q(v, 65535.0) as u16).collect();
            image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w, h, px)
                .expect("sized")
                .write_to(&mut out, image::ImageFormat::Png)
        }
    };
    res.map_err(|e| DataError::Png(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes any PNG to luminance in `[0, 1]`.
pub fn decode_png(bytes: &[u8]) -> Result<ScalarGrid, DataError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| DataError::Png(e.to_string()))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    Ok(Grid::from_vec(w as usize, h as usize, data).expect("sized"))
}

pub fn write_png(path: &Path, grid: &ScalarGrid, depth: PngDepth) -> Result<(), DataError> {
    write_file(path, &encode_png(grid, depth)?)
}

pub fn read_png(path: &Path) -> Result<ScalarGrid, DataError> {
    decode_png(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Reports

pub const SCHEMA_VERSION: &str = "1";

/// `v` rounded to 9 significant digits.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Report float text: 9 significant digits, shortest form.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{}", round_sig9(v))
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let r = round_sig9(n.as_f64().expect("f64"));
                if let Some(num) = serde_json::Number::from_f64(r) {
                    *n = num;
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// JSON report envelope with schema version, command name and resolved
/// config; floats rounded to 9 significant digits.
pub fn json_report<C: Serialize, R: Serialize>(command: &str, config: &C, results: &R) -> Result<String, DataError> {
    let mut doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": serde_json::to_value(config).map_err(|e| DataError::Json(e.to_string()))?,
        "results": serde_json::to_value(results).map_err(|e| DataError::Json(e.to_string()))?,
    });
    round_json(&mut doc);
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| DataError::Json(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn json_value(text: &str) -> Result<serde_json::Value, DataError> {
    serde_json::from_str(text).map_err(|e| DataError::Json(e.to_string()))
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Csv {
        line,
        message: e.to_string(),
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
}

fn read_csv(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>, DataError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let found = r.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(DataError::Csv {
            line: 1,
            message: format!(
                "expected header {header:?}, found {:?}",
                found.iter().collect::<Vec<_>>()
            ),
        });
    }
    r.records().map(|rec| rec.map_err(csv_error)).collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, DataError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| DataError::Csv {
        line,
        message: format!("missing {name}"),
    })?;
    raw.parse().map_err(|_| DataError::Csv {
        line,
        message: format!("bad {name} {raw:?}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcRow {
    pub scene: String,
    pub translation_magnitude: f64,
    pub n: usize,
    pub sfc: f64,
    pub mean_flow_magnitude: f64,
    pub mask_source: String,
}

pub const SFC_HEADER: [&str; 6] = [
    "scene",
    "translation_magnitude",
    "n",
    "sfc",
    "mean_flow_magnitude",
    "mask_source",
];

pub fn sfc_rows_csv(rows: &[SfcRow]) -> String {
    write_csv(
        &SFC_HEADER,
        rows.iter().map(|r| {
            vec![
                r.scene.clone(),
                fmt9(r.translation_magnitude),
                r.n.to_string(),
                fmt9(r.sfc),
                fmt9(r.mean_flow_magnitude),
                r.mask_source.clone(),
            ]
        }),
    )
}

pub fn parse_sfc_rows_csv(text: &str) -> Result<Vec<SfcRow>, DataError> {
    read_csv(text, &SFC_HEADER)?
        .iter()
        .map(|rec| {
            Ok(SfcRow {
                scene: field(rec, 0, "scene")?,
                translation_magnitude: field(rec, 1, "translation_magnitude")?,
                n: field(rec, 2, "n")?,
                sfc: field(rec, 3, "sfc")?,
                mean_flow_magnitude: field(rec, 4, "mean_flow_magnitude")?,
                mask_source: field(rec, 5, "mask_source")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub threshold: f64,
    pub pct_all: f64,
    pub pct_xy: f64,
    pub pct_xz: f64,
    pub pct_yz: f64,
    pub pairs: usize,
    pub skips: usize,
}

pub const CURVE_HEADER: [&str; 7] = ["threshold", "pct_all", "pct_xy", "pct_xz", "pct_yz", "pairs", "skips"];

pub fn curve_rows(curve: &crate::tsed::SsTsedCurve) -> Vec<CurveRow> {
    (0..curve.thresholds.len())
        .map(|i| CurveRow {
            threshold: curve.thresholds[i],
            pct_all: curve.pct_all[i],
            pct_xy: curve.pct_xy[i],
            pct_xz: curve.pct_xz[i],
            pct_yz: curve.pct_yz[i],
            pairs: curve.pair_count,
            skips: curve.skips,
        })
        .collect()
}

pub fn curve_rows_csv(rows: &[CurveRow]) -> String {
    write_csv(
        &CURVE_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt9(r.threshold),
                fmt9(r.pct_all),
                fmt9(r.pct_xy),
                fmt9(r.pct_xz),
                fmt9(r.pct_yz),
                r.pairs.to_string(),
                r.skips.to_string(),
            ]
        }),
    )
}

pub fn parse_curve_rows_csv(text: &str) -> Result<Vec<CurveRow>, DataError> {
    read_csv(text, &CURVE_HEADER)?
        .iter()
        .map(|rec| {
            Ok(CurveRow {
                threshold: field(rec, 0, "threshold")?,
                pct_all: field(rec, 1, "pct_all")?,
                pct_xy: field(rec, 2, "pct_xy")?,
                pct_xz: field(rec, 3, "pct_xz")?,
                pct_yz: field(rec, 4, "pct_yz")?,
                pairs: field(rec, 5, "pairs")?,
                skips: field(rec, 6, "skips")?,
            })
        })
        .collect()
}

pub const DEPTH_PAIR_HEADER: [&str; 3] = ["view_id", "sparse_depth", "mono_depth"];

/// Depth pairs are stored at full precision.
pub fn depth_pairs_csv(rows: &[(usize, DepthPairSample)]) -> String {
    write_csv(
        &DEPTH_PAIR_HEADER,
        rows.iter()
            .map(|(v, s)| vec![v.to_string(), f17(s.sparse_depth), f17(s.mono_depth)]),
    )
}

pub fn parse_depth_pairs_csv(text: &str) -> Result<Vec<(usize, DepthPairSample)>, DataError> {
    read_csv(text, &DEPTH_PAIR_HEADER)?
        .iter()
        .map(|rec| {
            Ok((
                field(rec, 0, "view_id")?,
                DepthPairSample {
                    sparse_depth: field(rec, 1, "sparse_depth")?,
                    mono_depth: field(rec, 2, "mono_depth")?,
                },
            ))
        })
        .collect()
}

/// `epoch, loss, <one column per scene id>`.
pub fn history_csv(h: &crate::scale_opt::ScaleHistory) -> String {
    let mut header = vec!["epoch", "loss"];
    header.extend(h.ids.iter().map(String::as_str));
    write_csv(
        &header,
        h.scales.iter().zip(&h.losses).enumerate().map(|(e, (s, l))| {
            let mut row = vec![(e + 1).to_string(), fmt9(*l)];
            row.extend(s.iter().map(|&v| fmt9(v)));
            row
        }),
    )
}

pub fn series_csv(name: &str, values: &[f64]) -> String {
    write_csv(
        &["index", name],
        values.iter().enumerate().map(|(i, &v)| vec![i.to_string(), fmt9(v)]),
    )
}
