//! Multi-cycle accumulation, fixed-size Doppler-ranked resampling, and
//! feature extraction.
//!
//! Networks consume clouds of exactly `target_size` points (2560 by
//! default), accumulated over three consecutive sensor cycles. Upsampling
//! duplicates the points with the largest absolute Doppler values;
//! downsampling removes low-Doppler points, oldest cycles first.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::labels::{map_labels, ClassConfig, Target};
use crate::types::{Annotation, Frame, Sequence};

/// Default fixed cloud size.
pub const DEFAULT_CLOUD_SIZE: usize = 2560;
/// Default number of accumulated sensor cycles.
pub const DEFAULT_CYCLES: usize = 3;
/// Relative timestamp decrement per cycle of age (10 Hz sampling).
pub const REL_TIMESTAMP_STEP: f64 = -0.1;

/// One point of an accumulated (and possibly resampled) cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub doppler: f64,
    /// 0 for the newest cycle, then -0.1, -0.2.
    pub rel_timestamp: f64,
    /// Cycles of age; 0 = newest.
    pub cycle_age: u32,
    /// Index into the accumulated point list before resampling; duplicates
    /// introduced by upsampling share the origin index of their source.
    pub origin_index: usize,
    pub annotation: Annotation,
}

/// Accumulate consecutive frames into one point list.
///
/// The newest frame receives relative timestamp 0, older frames -0.1 per
/// cycle of age. Frames must have consecutive cycle indices.
pub fn accumulate(frames: &[Frame]) -> Result<Vec<CloudPoint>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("accumulate needs at least one frame"));
    }
    for pair in frames.windows(2) {
        if pair[1].cycle_index != pair[0].cycle_index + 1 {
            return Err(Error::NonConsecutiveFrames {
                prev: pair[0].cycle_index,
                next: pair[1].cycle_index,
            });
        }
    }
    let newest = frames.last().unwrap().cycle_index;
    let mut out = Vec::with_capacity(frames.iter().map(|f| f.points.len()).sum());
    for frame in frames {
        let age = newest - frame.cycle_index;
        for p in &frame.points {
            out.push(CloudPoint {
                x: p.x,
                y: p.y,
                amplitude: p.amplitude,
                doppler: p.doppler,
                rel_timestamp: REL_TIMESTAMP_STEP * age as f64,
                cycle_age: age,
                origin_index: out.len(),
                annotation: p.annotation,
            });
        }
    }
    Ok(out)
}

/// A cloud of exactly `target_size` points.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCloud {
    pub points: Vec<CloudPoint>,
}

impl FixedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-point training targets under a model configuration.
    pub fn targets(&self, cfg: &ClassConfig) -> Vec<Target> {
        self.points
            .iter()
            .map(|p| map_labels(&p.annotation, cfg))
            .collect()
    }

    /// Per-point instance ids (0 = none).
    pub fn instance_ids(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.annotation.instance_id).collect()
    }

    /// N x 2 matrix of (x, y) coordinates used for neighborhood queries.
    pub fn coords(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), 2));
        for (i, p) in self.points.iter().enumerate() {
            m[[i, 0]] = p.x;
            m[[i, 1]] = p.y;
        }
        m
    }
}

/// Resample a point list to exactly `target_size` points.
///
/// Upsampling appends duplicates of the points with the largest |Doppler|
/// (newer cycles win ties), cycling through the ranking when more duplicates
/// are needed than points exist. Downsampling removes points ordered by
/// (oldest cycle first, then smallest |Doppler|). Equal sizes are the
/// identity; the survivors keep their input order either way.
pub fn resample(points: Vec<CloudPoint>, target_size: usize) -> Result<FixedCloud> {
    if points.is_empty() {
        return Err(Error::EmptyInput("resample needs a non-empty cloud"));
    }
    let n = points.len();
    let mut points = points;

    if n < target_size {
        // Rank by |doppler| descending, newer cycle first, then input order.
        let mut ranking: Vec<usize> = (0..n).collect();
        ranking.sort_by(|&a, &b| {
            points[b].doppler.abs().partial_cmp(&points[a].doppler.abs()).unwrap()
                .then(points[a].cycle_age.cmp(&points[b].cycle_age))
                .then(a.cmp(&b))
        });
        let missing = target_size - n;
        for k in 0..missing {
            let src = ranking[k % n];
            points.push(points[src].clone());
        }
    } else if n > target_size {
        // Removal order: oldest cycle first, then smallest |doppler|,
        // then input order.
        let mut removal: Vec<usize> = (0..n).collect();
        removal.sort_by(|&a, &b| {
            points[b].cycle_age.cmp(&points[a].cycle_age)
                .then(points[a].doppler.abs().partial_cmp(&points[b].doppler.abs()).unwrap())
                .then(a.cmp(&b))
        });
        let mut drop = vec![false; n];
        for &idx in removal.iter().take(n - target_size) {
            drop[idx] = true;
        }
        let mut kept = Vec::with_capacity(target_size);
        for (i, p) in points.into_iter().enumerate() {
            if !drop[i] {
                kept.push(p);
            }
        }
        points = kept;
    }

    debug_assert_eq!(points.len(), target_size);
    Ok(FixedCloud { points })
}

/// Accumulate a frame window and resample it to a fixed size.
pub fn build_cloud(frames: &[Frame], target_size: usize) -> Result<FixedCloud> {
    resample(accumulate(frames)?, target_size)
}

/// Sliding windows of `n_cycles` consecutive frames with the given stride.
pub fn windows(seq: &Sequence, n_cycles: usize, stride: usize) -> Vec<&[Frame]> {
    if seq.frames.len() < n_cycles || n_cycles == 0 || stride == 0 {
        return Vec::new();
    }
    (0..=(seq.frames.len() - n_cycles))
        .step_by(stride)
        .map(|start| &seq.frames[start..start + n_cycles])
        .collect()
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Number of per-point features: x, y, amplitude, doppler, rel_timestamp.
pub const NUM_FEATURES: usize = 5;

/// Windowing and resampling parameters; stored in model checkpoints so
/// inference reproduces the training-time preprocessing.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Accumulated sensor cycles per cloud.
    pub n_cycles: usize,
    /// Fixed cloud size after resampling.
    pub cloud_size: usize,
    /// Window stride when building training clouds.
    pub train_stride: usize,
    /// Window stride when building evaluation clouds.
    pub eval_stride: usize,
    /// Standardize features with training-split statistics.
    pub standardize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            n_cycles: DEFAULT_CYCLES,
            cloud_size: DEFAULT_CLOUD_SIZE,
            train_stride: 2,
            eval_stride: 3,
            standardize: false,
        }
    }
}

/// Per-feature standardization statistics, estimated on the training split
/// and stored with the model checkpoint.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

impl FeatureStats {
    /// Identity statistics (mean 0, std 1).
    pub fn identity() -> Self {
        Self {
            mean: [0.0; NUM_FEATURES],
            std: [1.0; NUM_FEATURES],
        }
    }

    /// Estimate from a set of clouds; zero-variance features keep std 1.
    pub fn from_clouds<'a>(clouds: impl IntoIterator<Item = &'a FixedCloud>) -> Self {
        let mut sum = [0.0; NUM_FEATURES];
        let mut sum_sq = [0.0; NUM_FEATURES];
        let mut count = 0usize;
        for cloud in clouds {
            for p in &cloud.points {
                for (j, v) in feature_row(p).into_iter().enumerate() {
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity();
        }
        let mut mean = [0.0; NUM_FEATURES];
        let mut std = [1.0; NUM_FEATURES];
        for j in 0..NUM_FEATURES {
            mean[j] = sum[j] / count as f64;
            let var = (sum_sq[j] / count as f64 - mean[j] * mean[j]).max(0.0);
            if var > 0.0 {
                std[j] = var.sqrt();
            }
        }
        Self { mean, std }
    }
}

fn feature_row(p: &CloudPoint) -> [f64; NUM_FEATURES] {
    [p.x, p.y, p.amplitude, p.doppler, p.rel_timestamp]
}

/// Extract the N x 5 feature matrix (x, y, amplitude, doppler,
/// rel_timestamp), optionally standardized.
pub fn featurize(cloud: &FixedCloud, stats: Option<&FeatureStats>) -> Array2<f64> {
    let mut m = Array2::zeros((cloud.len(), NUM_FEATURES));
    for (i, p) in cloud.points.iter().enumerate() {
        let row = feature_row(p);
        for (j, v) in row.into_iter().enumerate() {
            m[[i, j]] = match stats {
                Some(s) => (v - s.mean[j]) / s.std[j],
                None => v,
            };
        }
    }
    m
}
