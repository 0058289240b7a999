//! All-sky-imager (ASI) feature extraction and multi-horizon GHI nowcasting.
//!
//! The crate covers the whole chain from raw fisheye sky frames to evaluated
//! forecasts: solar geometry, lens reprojection, hybrid cloud segmentation,
//! dense optical flow, stereoscopic cloud base height, feature/window
//! assembly, a small CNN/LSTM stack with hand-written gradients, the three
//! forecaster variants and the evaluation harness. A synthetic stereo scene
//! generator provides ground truth for every stage.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forecasters;
pub mod imaging;
pub mod io;
pub mod manifest;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod segmentation;
pub mod selftest;
pub mod solar;
pub mod stereo_cbh;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
