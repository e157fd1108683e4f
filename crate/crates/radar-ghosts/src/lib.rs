//! Desk-scale laboratory for automotive-radar multi-path ("ghost")
//! detections.
//!
//! The crate simulates labeled birds-eye-view radar point-cloud sequences
//! with physically derived ghost reflections, trains and runs two instance
//! segmentation detectors (a similarity-grouping network and a DBSCAN
//! baseline) and evaluates them with point-wise IoU metrics.
//!
//! The processing chain is:
//!
//! 1. [`geometry`] – closed-form specular multi-path predictions.
//! 2. [`simulate`] – labeled sequence generation and multi-object overlay.
//! 3. [`preprocess`] – multi-cycle accumulation, fixed-size resampling,
//!    feature extraction.
//! 4. [`nnet`] – per-point network with similarity and confidence heads,
//!    trained by adaptive-moment gradient descent.
//! 5. [`detect`] – similarity-matrix group proposals + NMS, and the DBSCAN
//!    pipeline.
//! 6. [`eval`] – average precision, semantic F1 and false-positive
//!    attribution.
//!
//! See the crate examples for one runnable program per capability, and the
//! `radar-ghosts` binary for the file-driven pipeline.

pub mod dataset;
pub mod detect;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod labels;
pub mod nnet;
pub mod preprocess;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
