#![allow(dead_code)]

use std::path::Path;

use nalgebra::{Rotation3, Vector2, Vector3};
use proptest::prelude::*;
use scalekit::dataio::{CurveRow, SfcRow, TrajectoryFile, TrajectoryFrame};
use scalekit::grid::{FlowField, Grid, ScalarGrid};

pub fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO,
        -1000.0f32..1000.0,
    ]
}

pub fn flow_field() -> impl Strategy<Value = FlowField> {
    (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
        prop::collection::vec((finite_f32(), finite_f32()), w * h).prop_map(move |v| {
            Grid::from_vec(
                w,
                h,
                v.into_iter().map(|(a, b)| Vector2::new(a as f64, b as f64)).collect(),
            )
            .unwrap()
        })
    })
}

pub fn scalar_grid() -> impl Strategy<Value = ScalarGrid> {
    (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
        prop::collection::vec(finite_f32(), w * h)
            .prop_map(move |v| Grid::from_vec(w, h, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn frame() -> impl Strategy<Value = TrajectoryFrame> {
    (
        prop::array::uniform4(0.01f64..3.0),
        prop::array::uniform2(-1.0f64..1.0),
        prop::array::uniform3(-3.2f64..3.2),
        prop::array::uniform3(-1e3f64..1e3),
    )
        .prop_map(|(intrinsics, reserved, axis, t)| {
            let r = Rotation3::new(Vector3::from(axis)).into_inner();
            let mut pose = [0.0; 12];
            for row in 0..3 {
                for col in 0..3 {
                    pose[4 * row + col] = r[(row, col)];
                }
                pose[4 * row + 3] = t[row];
            }
            TrajectoryFrame {
                timestamp_us: 0,
                intrinsics,
                reserved,
                pose,
            }
        })
}

pub fn trajectory() -> impl Strategy<Value = TrajectoryFile> {
    (
        "[A-Za-z0-9_/:. -]{0,40}",
        prop::collection::vec((frame(), 1i64..1_000_000), 1..6),
        -1_000_000_000i64..1_000_000_000,
    )
        .prop_map(|(source, frames, start)| {
            let mut ts = start;
            TrajectoryFile {
                source: source.trim_end().to_string(),
                frames: frames
                    .into_iter()
                    .map(|(mut f, step)| {
                        ts += step;
                        f.timestamp_us = ts;
                        f
                    })
                    .collect(),
            }
        })
}

pub fn report_float() -> impl Strategy<Value = f64> {
    prop_oneof![prop::num::f64::NORMAL, Just(0.0), -1e6f64..1e6, 0.0f64..1.0,]
}

pub fn sfc_rows() -> impl Strategy<Value = Vec<SfcRow>> {
    prop::collection::vec(
        (
            "[a-z0-9_]{1,12}",
            report_float(),
            0usize..1000,
            report_float(),
            report_float(),
            prop_oneof![Just("ground_truth"), Just("consensus")],
        )
            .prop_map(|(scene, m, n, sfc, f, src)| SfcRow {
                scene,
                translation_magnitude: m,
                n,
                sfc,
                mean_flow_magnitude: f,
                mask_source: src.into(),
            }),
        0..6,
    )
}

pub fn curve_rows() -> impl Strategy<Value = Vec<CurveRow>> {
    prop::collection::vec(
        (prop::array::uniform5(report_float()), 0usize..10_000, 0usize..100).prop_map(|(v, pairs, skips)| CurveRow {
            threshold: v[0],
            pct_all: v[1],
            pct_xy: v[2],
            pct_xz: v[3],
            pct_yz: v[4],
            pairs,
            skips,
        }),
        0..6,
    )
}

/// Grids equal cell by cell, with NaN matching NaN.
pub fn same_flow(a: &FlowField, b: &FlowField, tol: f64) -> bool {
    a.dims() == b.dims()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| (0..2).all(|i| (p[i].is_nan() && q[i].is_nan()) || (p[i] - q[i]).abs() <= tol))
}

pub fn max_abs_diff(a: &ScalarGrid, b: &ScalarGrid) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Every file under `dir`, relative path and contents, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
