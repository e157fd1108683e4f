//! Experiment orchestration: dataset suites, training, batch detection and
//! metric reports.
//!
//! An experiment config describes a set of scenarios with split assignments
//! (test scenarios must not overlap train/val scenarios), overlay synthesis,
//! and all pipeline parameters. The stages are deterministic functions of
//! the config and its master seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_sequence, write_sequence};
use crate::detect::{dbscan_pipeline, sgpn_pipeline, DbscanParams, Detection};
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, best_f1_threshold, f1_semantic, fp_attribution, match_detections,
    pr_curve, window_ground_truth, DetFlag, FpAttribution, Interpolation, MatchedDetection,
    SemanticF1, WindowGt,
};
use crate::labels::{ClassConfig, Granularity, LabelSet};
use crate::nnet::{
    class_weights_from_dataset, Checkpoint, LossRecord, LossWeights, ModelConfig, ModelParams,
    TrainCloud, TrainConfig,
};
use crate::preprocess::{build_cloud, windows, FeatureStats, FixedCloud, PreprocessConfig};
use crate::simulate::{
    derive_seed, generate_sequence, overlay_random, KindParams, Scenario, Trajectory,
};
use crate::types::{Sequence, Split};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// A scenario with its split assignment and repetition count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenario: Scenario,
    pub split: Split,
    pub count: usize,
}

/// Overlay synthesis parameters per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayConfig {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Number of overlaid sources, drawn uniformly from this range.
    pub sources_min: usize,
    pub sources_max: usize,
    /// Frames per synthesized sequence.
    pub out_len: usize,
    pub min_separation: f64,
    pub max_tries: usize,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            train_count: 8,
            val_count: 1,
            test_count: 3,
            sources_min: 2,
            sources_max: 3,
            out_len: 12,
            min_separation: 0.8,
            max_tries: 20000,
        }
    }
}

/// Hinge thresholds and mix coefficients (class weights come from the data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    pub w_semantic: f64,
    pub w_similarity: f64,
    pub w_confidence: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 2.0,
            alpha: 2.0,
            w_semantic: 1.0,
            w_similarity: 1.0,
            w_confidence: 1.0,
        }
    }
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub scenarios: Vec<ScenarioSet>,
    pub overlays: OverlayConfig,
    pub class_config: ClassConfig,
    pub preprocess: PreprocessConfig,
    pub hidden: usize,
    pub embed_dim: usize,
    pub k_neighbors: usize,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub nms_iou: f64,
    pub dbscan: DbscanParams,
    pub iou_thresholds: Vec<f64>,
    pub interpolation: Interpolation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            scenarios: Vec::new(),
            overlays: OverlayConfig::default(),
            class_config: ClassConfig {
                granularity: Granularity::Merged,
                labelset: LabelSet::GhostMerged,
            },
            preprocess: PreprocessConfig::default(),
            hidden: 64,
            embed_dim: 16,
            k_neighbors: 16,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            nms_iou: 0.5,
            dbscan: DbscanParams::default(),
            iou_thresholds: vec![0.3, 0.5],
            interpolation: Interpolation::AllPoint,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("no scenarios configured".into()));
        }
        for set in &self.scenarios {
            set.scenario.validate()?;
            if set.count == 0 {
                return Err(Error::InvalidConfig(format!(
                    "scenario '{}' has count 0",
                    set.scenario.scenario_id
                )));
            }
        }
        // No scenario overlap between test and train/val.
        let mut train_val = std::collections::BTreeSet::new();
        let mut test = std::collections::BTreeSet::new();
        for set in &self.scenarios {
            match set.split {
                Split::Test => test.insert(set.scenario.scenario_id.clone()),
                _ => train_val.insert(set.scenario.scenario_id.clone()),
            };
        }
        if let Some(shared) = test.intersection(&train_val).next() {
            return Err(Error::InvalidConfig(format!(
                "scenario '{shared}' appears in the test split and in train/val"
            )));
        }
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("no IoU thresholds".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            k_neighbors: self.k_neighbors,
            num_classes: self.class_config.num_classes(),
        }
    }

    pub fn loss_weights(&self, class_weights: Vec<f64>) -> LossWeights {
        LossWeights {
            class_weights,
            k1: self.loss.k1,
            k2: self.loss.k2,
            alpha: self.loss.alpha,
            w_semantic: self.loss.w_semantic,
            w_similarity: self.loss.w_similarity,
            w_confidence: self.loss.w_confidence,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Benchmark suite preset
// ---------------------------------------------------------------------------

/// One corridor walk: a lane parallel to the base path, shifted by
/// `lane_offset` meters in y. Distinct lanes keep the runs of one scenario
/// separable when overlaid, the way distinct real recordings are.
fn corridor_scenario(id: &str, wall_x: f64, lane_offset: f64) -> Scenario {
    Scenario {
        scenario_id: id.into(),
        walls: vec![crate::geometry::WallSegment::new(
            1,
            crate::geometry::Vec2::new(wall_x, -6.0),
            crate::geometry::Vec2::new(wall_x, 8.0),
        )],
        trajectory: Trajectory {
            waypoints: vec![
                crate::geometry::Vec2::new(2.6, -1.0 + lane_offset),
                crate::geometry::Vec2::new(wall_x - 1.9, 2.2 + lane_offset),
            ],
            speed: 1.5,
            out_and_back: true,
        },
        trajectory_jitter: 0.12,
        detection_prob: KindParams {
            real: 1.0,
            mp12: 0.85,
            mp22: 0.85,
            mp23: 0.8,
            omp: 0.05,
        },
        points_per_frame_mean: KindParams {
            real: 14.0,
            mp12: 2.5,
            mp22: 2.5,
            mp23: 2.5,
            omp: 0.6,
        },
        clutter_rate: 140.0,
        n_frames: 200,
        seed: 0,
        ..Scenario::corridor()
    }
}

/// The corridor benchmark: walls beside a walking pedestrian, 6 train / 1
/// val / 2 test sequences (~200 frames each) plus overlays. Runs of one
/// scenario walk staggered lanes; the test split uses its own corridor
/// variant so scenarios stay disjoint.
pub fn corridor_benchmark(seed: u64) -> ExperimentConfig {
    let mut scenarios = Vec::new();
    let train_lanes = [-2.25, -1.35, -0.45, 0.45, 1.35, 2.25];
    for &lane in &train_lanes {
        scenarios.push(ScenarioSet {
            scenario: corridor_scenario("corridor-a", 6.0, lane),
            split: Split::Train,
            count: 1,
        });
    }
    scenarios.push(ScenarioSet {
        scenario: corridor_scenario("corridor-a", 6.0, 3.15),
        split: Split::Val,
        count: 1,
    });
    for &lane in &[-1.0, 0.8] {
        scenarios.push(ScenarioSet {
            scenario: corridor_scenario("corridor-b", 7.0, lane),
            split: Split::Test,
            count: 1,
        });
    }
    ExperimentConfig {
        name: "corridor-benchmark".into(),
        seed,
        scenarios,
        overlays: OverlayConfig {
            val_count: 0,
            ..OverlayConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

// ---------------------------------------------------------------------------
// Dataset generation and I/O
// ---------------------------------------------------------------------------

/// Named sequences per split.
#[derive(Debug, Clone, Default)]
pub struct DatasetStore {
    pub sequences: BTreeMap<Split, Vec<(String, Sequence)>>,
}

impl DatasetStore {
    pub fn split(&self, split: Split) -> &[(String, Sequence)] {
        self.sequences.get(&split).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Generate all sequences and overlays of an experiment in memory.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<DatasetStore> {
    cfg.validate()?;
    let mut store = DatasetStore::default();

    for (set_index, set) in cfg.scenarios.iter().enumerate() {
        for run in 0..set.count {
            let scenario = Scenario {
                seed: derive_seed(derive_seed(cfg.seed, set_index as u64), run as u64),
                ..set.scenario.clone()
            };
            let seq = generate_sequence(&scenario, set.split)?;
            let name = format!("{}-r{:02}", scenario.scenario_id, run);
            store
                .sequences
                .entry(set.split)
                .or_default()
                .push((name, seq));
        }
    }

    // Overlays per split, drawn from same-scenario sources of that split.
    for (split, count, stream) in [
        (Split::Train, cfg.overlays.train_count, 1u64),
        (Split::Val, cfg.overlays.val_count, 2),
        (Split::Test, cfg.overlays.test_count, 3),
    ] {
        if count == 0 {
            continue;
        }
        let originals: Vec<(String, Sequence)> = store.split(split).to_vec();
        if originals.is_empty() {
            continue;
        }
        // Group by scenario id; overlays must not mix scenarios.
        let mut by_scenario: BTreeMap<String, Vec<&Sequence>> = BTreeMap::new();
        for (_, seq) in &originals {
            by_scenario
                .entry(seq.scenario_id.clone())
                .or_default()
                .push(seq);
        }
        let groups: Vec<&Vec<&Sequence>> = by_scenario.values().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xC0FFEE + stream));
        for i in 0..count {
            let group = groups[i % groups.len()];
            let n_sources = rand::Rng::gen_range(
                &mut rng,
                cfg.overlays.sources_min..=cfg.overlays.sources_max,
            );
            let draw = overlay_random(
                group,
                n_sources,
                cfg.overlays.min_separation,
                cfg.overlays.out_len,
                &mut rng,
                cfg.overlays.max_tries,
            )?;
            let name = format!("overlay-{}-{i:02}", split.to_string().to_lowercase());
            store
                .sequences
                .entry(split)
                .or_default()
                .push((name, draw.sequence));
        }
    }
    Ok(store)
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Write a dataset as `<dir>/{train,val,test}/<name>.jsonl`.
pub fn write_dataset(store: &DatasetStore, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for (&split, seqs) in &store.sequences {
        let sub = dir.join(split_dir(split));
        std::fs::create_dir_all(&sub)?;
        for (name, seq) in seqs {
            let path = sub.join(format!("{name}.jsonl"));
            write_sequence(seq, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Load a dataset directory written by [`write_dataset`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetStore> {
    let dir = dir.as_ref();
    let mut store = DatasetStore::default();
    for split in [Split::Train, Split::Val, Split::Test] {
        let sub = dir.join(split_dir(split));
        if !sub.is_dir() {
            continue;
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&sub)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
            .collect();
        paths.sort();
        for path in paths {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("sequence")
                .to_string();
            store
                .sequences
                .entry(split)
                .or_default()
                .push((name, read_sequence(&path)?));
        }
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Build the fixed clouds of a split (training stride or evaluation stride).
pub fn split_clouds(
    store: &DatasetStore,
    split: Split,
    pre: &PreprocessConfig,
    stride: usize,
) -> Vec<FixedCloud> {
    let mut out = Vec::new();
    for (_, seq) in store.split(split) {
        for window in windows(seq, pre.n_cycles, stride) {
            if let Ok(cloud) = build_cloud(window, pre.cloud_size) {
                out.push(cloud);
            }
        }
    }
    out
}

/// Train a model on the train split of a dataset. Returns the checkpoint
/// and the loss curve.
pub fn train_model(
    cfg: &ExperimentConfig,
    store: &DatasetStore,
    seed: u64,
) -> Result<(Checkpoint, Vec<LossRecord>)> {
    let clouds = split_clouds(store, Split::Train, &cfg.preprocess, cfg.preprocess.train_stride);
    if clouds.is_empty() {
        return Err(Error::EmptyInput("no training clouds"));
    }
    let stats = cfg
        .preprocess
        .standardize
        .then(|| FeatureStats::from_clouds(&clouds));
    let class_weights = class_weights_from_dataset(&clouds, &cfg.class_config)?;
    let loss_weights = cfg.loss_weights(class_weights);

    let train_clouds: Vec<TrainCloud> = clouds
        .par_iter()
        .map(|c| TrainCloud::prepare(c, &cfg.class_config, stats.as_ref(), cfg.k_neighbors))
        .collect::<Result<Vec<_>>>()?;

    let mut params = ModelParams::init(cfg.model_config(), seed);
    let train_config = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let curve = crate::nnet::train(&mut params, &train_clouds, &loss_weights, &train_config)?;
    let ckpt = Checkpoint::new(
        cfg.class_config,
        cfg.preprocess.clone(),
        loss_weights,
        stats,
        params,
    );
    Ok((ckpt, curve))
}

// ---------------------------------------------------------------------------
// Batch detection
// ---------------------------------------------------------------------------

/// Which instance-extraction route to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Sgpn,
    Dbscan,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectorKind::Sgpn => write!(f, "sgpn"),
            DetectorKind::Dbscan => write!(f, "dbscan"),
        }
    }
}

/// Identifies the evaluation window a detection came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowKey {
    pub sequence: String,
    /// Index of the first frame of the window.
    pub start: usize,
    /// Cycle index of the newest frame.
    pub frame: u32,
}

/// Detections of one pipeline over a set of sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSet {
    pub pipeline: DetectorKind,
    pub n_cycles: usize,
    pub cloud_size: usize,
    pub stride: usize,
    pub class_names: Vec<String>,
    pub records: Vec<(WindowKey, Detection)>,
}

/// Run a detector over every evaluation window of the given sequences.
pub fn detect_sequences(
    ckpt: &Checkpoint,
    sequences: &[(String, Sequence)],
    kind: DetectorKind,
    nms_iou: f64,
    dbscan: &DbscanParams,
) -> Result<DetectionSet> {
    let pre = &ckpt.preprocess;
    let mut tasks = Vec::new();
    for (name, seq) in sequences {
        for (w, window) in windows(seq, pre.n_cycles, pre.eval_stride).into_iter().enumerate() {
            let start = w * pre.eval_stride;
            tasks.push((name.clone(), start, window));
        }
    }

    let records: Vec<Vec<(WindowKey, Detection)>> = tasks
        .par_iter()
        .map(|(name, start, window)| -> Result<Vec<(WindowKey, Detection)>> {
            let cloud = build_cloud(window, pre.cloud_size)?;
            let prepared = TrainCloud::prepare(
                &cloud,
                &ckpt.class_config,
                ckpt.feature_stats.as_ref(),
                ckpt.params.config.k_neighbors,
            )?;
            let (output, _) = ckpt
                .params
                .forward_with_knn(&prepared.features, &prepared.knn)?;
            let detections = match kind {
                DetectorKind::Sgpn => {
                    let origin: Vec<usize> =
                        cloud.points.iter().map(|p| p.origin_index).collect();
                    sgpn_pipeline(&output, &origin, ckpt.loss_weights.k1, nms_iou)
                }
                DetectorKind::Dbscan => dbscan_pipeline(&output.logits, &cloud, dbscan),
            };
            let key = WindowKey {
                sequence: name.clone(),
                start: *start,
                frame: window.last().unwrap().cycle_index,
            };
            Ok(detections.into_iter().map(|d| (key.clone(), d)).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DetectionSet {
        pipeline: kind,
        n_cycles: pre.n_cycles,
        cloud_size: pre.cloud_size,
        stride: pre.eval_stride,
        class_names: ckpt.class_config.class_names(),
        records: records.into_iter().flatten().collect(),
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// AP of one class at one IoU threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_detections: usize,
}

/// AP table at one IoU threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IouReport {
    pub iou: f64,
    pub per_class: Vec<ClassAp>,
    /// Mean over foreground classes with ground truth.
    pub mean_ap: Option<f64>,
}

/// Semantic F1 with class names attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticReport {
    pub per_class: Vec<(String, Option<f64>)>,
    pub macro_foreground: f64,
}

/// Attribution table plus the threshold it was computed at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionReport {
    pub iou: f64,
    pub score_threshold: f64,
    pub attribution: FpAttribution,
}

/// All metrics of one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pipeline: DetectorKind,
    pub class_names: Vec<String>,
    pub per_iou: Vec<IouReport>,
    pub semantic: Option<SemanticReport>,
    pub attribution: Option<AttributionReport>,
}

/// Rebuild the ground truth of every window a detection set refers to.
fn build_window_index(
    detections: &DetectionSet,
    sequences: &[(String, Sequence)],
    cfg: &ClassConfig,
) -> Result<(Vec<WindowGt>, BTreeMap<WindowKey, usize>)> {
    let by_name: BTreeMap<&str, &Sequence> =
        sequences.iter().map(|(n, s)| (n.as_str(), s)).collect();

    let mut keys: Vec<WindowKey> = detections.records.iter().map(|(k, _)| k.clone()).collect();
    // Ground truth must exist for every window, detections or not; false
    // negatives in windows without detections count via n_gt.
    for (name, seq) in sequences {
        for (w, window) in windows(seq, detections.n_cycles, detections.stride)
            .into_iter()
            .enumerate()
        {
            keys.push(WindowKey {
                sequence: name.clone(),
                start: w * detections.stride,
                frame: window.last().unwrap().cycle_index,
            });
        }
    }
    keys.sort();
    keys.dedup();

    let mut gts = Vec::with_capacity(keys.len());
    let mut index = BTreeMap::new();
    for key in keys {
        let seq = by_name.get(key.sequence.as_str()).ok_or_else(|| {
            Error::InvalidConfig(format!("unknown sequence '{}' in detections", key.sequence))
        })?;
        if key.start + detections.n_cycles > seq.frames.len() {
            return Err(Error::InvalidConfig(format!(
                "window {}+{} beyond sequence '{}'",
                key.start, detections.n_cycles, key.sequence
            )));
        }
        let frames = &seq.frames[key.start..key.start + detections.n_cycles];
        let cloud = build_cloud(frames, detections.cloud_size)?;
        index.insert(key, gts.len());
        gts.push(window_ground_truth(&cloud, cfg));
    }
    Ok((gts, index))
}

/// Evaluate a detection set against the sequences it was computed on.
///
/// `attribution_iou` additionally runs the false-positive attribution at
/// that IoU threshold, using the best-F1 score threshold of the pooled
/// precision-recall curve.
pub fn evaluate_detections(
    detections: &DetectionSet,
    sequences: &[(String, Sequence)],
    cfg: &ClassConfig,
    iou_thresholds: &[f64],
    interpolation: Interpolation,
    attribution_iou: Option<f64>,
) -> Result<MetricsReport> {
    let (gts, index) = build_window_index(detections, sequences, cfg)?;
    let flat: Vec<(usize, Detection)> = detections
        .records
        .iter()
        .map(|(key, det)| (index[key], det.clone()))
        .collect();
    let class_names = cfg.class_names();
    let num_classes = cfg.num_classes();

    let mut per_iou = Vec::new();
    for &iou in iou_thresholds {
        let result = match_detections(&flat, &gts, num_classes, iou);
        let mut per_class = Vec::new();
        let mut ap_values = Vec::new();
        for class in 1..num_classes {
            let flags: Vec<(f64, bool)> = result
                .detections
                .iter()
                .filter(|d| d.class == class && d.flag != DetFlag::Ignored)
                .map(|d| (d.score, d.flag == DetFlag::TruePositive))
                .collect();
            let n_gt = result.gt_per_class[class];
            let ap = if n_gt == 0 {
                None
            } else {
                let curve = pr_curve(&flags, n_gt)?;
                Some(average_precision(&curve, interpolation))
            };
            if let Some(ap) = ap {
                ap_values.push(ap);
            }
            per_class.push(ClassAp {
                class: class_names[class].clone(),
                ap,
                n_gt,
                n_detections: flags.len(),
            });
        }
        let mean_ap = if ap_values.is_empty() {
            None
        } else {
            Some(ap_values.iter().sum::<f64>() / ap_values.len() as f64)
        };
        per_iou.push(IouReport {
            iou,
            per_class,
            mean_ap,
        });
    }

    // Optional confusion study: threshold at the best pooled F1, then
    // attribute the surviving false positives.
    let attribution = match attribution_iou {
        Some(iou) => {
            let result = match_detections(&flat, &gts, num_classes, iou);
            let flags: Vec<(f64, bool)> = result
                .detections
                .iter()
                .filter(|d| d.flag != DetFlag::Ignored)
                .map(|d| (d.score, d.flag == DetFlag::TruePositive))
                .collect();
            let total_gt: usize = result.gt_per_class.iter().sum();
            if flags.is_empty() || total_gt == 0 {
                None
            } else {
                let curve = pr_curve(&flags, total_gt)?;
                let (threshold, _) = best_f1_threshold(&curve)?;
                let fps: Vec<&MatchedDetection> = result
                    .detections
                    .iter()
                    .filter(|d| d.flag == DetFlag::FalsePositive && d.score >= threshold)
                    .collect();
                match fp_attribution(&fps, &gts, cfg) {
                    Ok(attribution) => Some(AttributionReport {
                        iou,
                        score_threshold: threshold,
                        attribution,
                    }),
                    Err(Error::NoFalsePositives) => None,
                    Err(e) => return Err(e),
                }
            }
        }
        None => None,
    };

    Ok(MetricsReport {
        pipeline: detections.pipeline,
        class_names,
        per_iou,
        semantic: None,
        attribution,
    })
}

/// Point-wise semantic F1 of a model over (original, non-overlay) sequences.
pub fn evaluate_semantic(
    ckpt: &Checkpoint,
    sequences: &[(String, Sequence)],
) -> Result<SemanticReport> {
    let pre = &ckpt.preprocess;
    let cfg = &ckpt.class_config;
    let num_classes = cfg.num_classes();

    let results: Vec<(Vec<usize>, Vec<crate::labels::Target>)> = sequences
        .par_iter()
        .map(|(_, seq)| -> Result<(Vec<usize>, Vec<crate::labels::Target>)> {
            let mut preds = Vec::new();
            let mut targets = Vec::new();
            for window in windows(seq, pre.n_cycles, pre.eval_stride) {
                let cloud = build_cloud(window, pre.cloud_size)?;
                let prepared = TrainCloud::prepare(
                    &cloud,
                    cfg,
                    ckpt.feature_stats.as_ref(),
                    ckpt.params.config.k_neighbors,
                )?;
                let (output, _) = ckpt
                    .params
                    .forward_with_knn(&prepared.features, &prepared.knn)?;
                for i in 0..cloud.len() {
                    let row = output.logits.row(i);
                    let mut best = 0;
                    for c in 1..num_classes {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    preds.push(best);
                    targets.push(prepared.targets[i]);
                }
            }
            Ok((preds, targets))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for (p, t) in results {
        preds.extend(p);
        targets.extend(t);
    }
    let f1: SemanticF1 = f1_semantic(&preds, &targets, num_classes);
    let names = cfg.class_names();
    Ok(SemanticReport {
        per_class: names
            .into_iter()
            .zip(f1.per_class.iter().cloned())
            .collect(),
        macro_foreground: f1.macro_foreground,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_benchmark() -> ExperimentConfig {
        let mut cfg = corridor_benchmark(1);
        cfg.scenarios = vec![
            ScenarioSet {
                scenario: Scenario {
                    n_frames: 40,
                    clutter_rate: 20.0,
                    ..super::corridor_scenario("corridor-a", 6.0, -1.0)
                },
                split: Split::Train,
                count: 1,
            },
            ScenarioSet {
                scenario: Scenario {
                    n_frames: 40,
                    clutter_rate: 20.0,
                    ..super::corridor_scenario("corridor-a", 6.0, 1.0)
                },
                split: Split::Train,
                count: 1,
            },
            ScenarioSet {
                scenario: Scenario {
                    n_frames: 40,
                    clutter_rate: 20.0,
                    ..super::corridor_scenario("corridor-b", 7.0, 0.0)
                },
                split: Split::Test,
                count: 2,
            },
        ];
        cfg.overlays = OverlayConfig {
            train_count: 1,
            val_count: 0,
            test_count: 1,
            out_len: 12,
            min_separation: 0.4,
            ..OverlayConfig::default()
        };
        cfg.preprocess.cloud_size = 128;
        cfg.hidden = 8;
        cfg.embed_dim = 4;
        cfg.k_neighbors = 8;
        cfg.train = TrainConfig {
            steps: 3,
            pair_subsample: 64,
            ..TrainConfig::default()
        };
        cfg
    }

    #[test]
    fn test_validate_rejects_split_leak() {
        let mut cfg = corridor_benchmark(0);
        let last = cfg.scenarios.len() - 1;
        cfg.scenarios[last].scenario.scenario_id = "corridor-a".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn test_dataset_generation_is_deterministic() {
        let cfg = tiny_benchmark();
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.split(Split::Train).len(), 3); // 2 sequences + 1 overlay
        assert_eq!(a.split(Split::Test).len(), 3);
    }

    #[test]
    fn test_dataset_write_load_round_trip() {
        let cfg = tiny_benchmark();
        let store = generate_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&store, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(store.sequences, loaded.sequences);
    }

    #[test]
    fn test_train_detect_evaluate_smoke() {
        let cfg = tiny_benchmark();
        let store = generate_dataset(&cfg).unwrap();
        let (ckpt, curve) = train_model(&cfg, &store, 1).unwrap();
        assert_eq!(curve.len(), 3);

        let dets = detect_sequences(
            &ckpt,
            store.split(Split::Test),
            DetectorKind::Sgpn,
            cfg.nms_iou,
            &cfg.dbscan,
        )
        .unwrap();
        let report = evaluate_detections(
            &dets,
            store.split(Split::Test),
            &cfg.class_config,
            &cfg.iou_thresholds,
            cfg.interpolation,
            Some(0.3),
        )
        .unwrap();
        assert_eq!(report.per_iou.len(), 2);
        assert_eq!(report.per_iou[0].per_class.len(), 2); // obj, obj-ghost
        // Ground truth must exist in the test windows.
        assert!(report.per_iou[0].per_class.iter().any(|c| c.n_gt > 0));

        let semantic = evaluate_semantic(&ckpt, store.split(Split::Test)).unwrap();
        assert_eq!(semantic.per_class.len(), 3);
    }
}
