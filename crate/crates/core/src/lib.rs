#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod depth_calib;
pub mod flow_metrics;
pub mod geometry;
pub mod grid;
pub mod protocol;
pub mod rng;
pub mod scale_opt;
pub mod stats;
pub mod synth;
pub mod tsed;
