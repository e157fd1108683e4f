//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset I/O, geometry, simulation and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("degenerate wall segment (zero length)")]
    DegenerateWall,

    #[error("no specular path: endpoints are not strictly on the same side of the wall line")]
    NoSpecularPath,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario mismatch: cannot overlay '{0}' with '{1}'")]
    ScenarioMismatch(String, String),

    #[error(
        "overlay separation violated at frame {frame}: instances {instance_a} and {instance_b} \
         are {distance:.3} m apart (minimum {min_separation} m)"
    )]
    OverlapViolation {
        frame: usize,
        instance_a: u32,
        instance_b: u32,
        distance: f64,
        min_separation: f64,
    },

    #[error("invalid overlay: {0}")]
    InvalidOverlay(String),

    #[error("frames are not consecutive: cycle {prev} followed by cycle {next}")]
    NonConsecutiveFrames { prev: u32, next: u32 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class '{0}' is absent from the training split")]
    ClassAbsent(String),

    #[error("non-finite loss at step {step}: {details}")]
    NonFiniteLoss { step: usize, details: String },

    #[error("invalid model input: {0}")]
    InvalidModelInput(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("no detections to analyze")]
    NoDetections,

    #[error("no false positives above threshold; attribution table is empty")]
    NoFalsePositives,

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
