//! Encoding and decoding flows (.flo), depth maps (PFM), images (PNG) and
//! camera trajectories in memory.

use nalgebra::Vector2;
use scalekit::dataio::{
    decode_flow, decode_pfm, decode_png, encode_flow, encode_pfm, encode_png, parse_trajectory, serialize_trajectory,
    PngDepth, TrajectoryFile, TrajectoryFrame,
};
use scalekit::geometry::Intrinsics;
use scalekit::grid::{FlowField, ScalarGrid};
use scalekit::synth::{make_sequences, render, SceneSpec, TrajectorySpec};

pub fn run_example() -> bool {
    let k = Intrinsics::centered(32, 60f64.to_radians());
    let seq = &make_sequences(1, 4, &SceneSpec::default(), &TrajectorySpec::default(), k).unwrap()[0];
    let out = render(&seq.scene, &seq.true_frame(0));

    let flow = FlowField::from_fn(32, 32, |x, y| Vector2::new(x as f64 * 0.25, -(y as f64)));
    let flo = encode_flow(&flow);
    let flow_back = decode_flow(&flo).unwrap();

    let pfm = encode_pfm(&out.depth);
    let depth_back = decode_pfm(&pfm).unwrap();

    let png = encode_png(&out.image, PngDepth::Sixteen).unwrap();
    let image_back: ScalarGrid = decode_png(&png).unwrap();
    let png_err = out
        .image
        .data()
        .iter()
        .zip(image_back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let traj = TrajectoryFile {
        source: "synthetic/scene_0000".into(),
        frames: seq
            .frames
            .iter()
            .enumerate()
            .map(|(i, c)| TrajectoryFrame::from_camera(c, i as i64 * 33_366))
            .collect(),
    };
    let text = serialize_trajectory(&traj);
    let traj_back = parse_trajectory(&text).unwrap();

    println!(
        ".flo: {} bytes, exact {}",
        flo.len(),
        flow_back == flow.map(|v| v.map(|c| c as f32 as f64))
    );
    println!(
        "PFM: {} bytes, max depth {:.3}",
        pfm.len(),
        depth_back.data().iter().cloned().fold(0.0, f64::max)
    );
    println!("PNG16: {} bytes, max quantization error {png_err:.1e}", png.len());
    println!(
        "trajectory: {} frames, first line {:?}",
        traj_back.frames.len(),
        text.lines().nth(1).unwrap_or("")
    );
    traj_back == traj
}

#[allow(dead_code)]
fn main() {
    run_example();
}
