//! Gradient-based training with adaptive-moment updates, plus the model
//! checkpoint format.
//!
//! The semantic loss runs on every point of a cloud; the similarity and
//! confidence losses run on a uniformly sampled subset of `pair_subsample`
//! points to bound the quadratic pair cost. All sampling derives from the
//! training seed, so runs are reproducible.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassConfig, Target};
use crate::preprocess::{featurize, FeatureStats, FixedCloud};

use super::loss::{
    confidence_loss, confidence_targets, semantic_loss, similarity_loss, similarity_matrix,
    similarity_matrix_backward, LossWeights, PointRole,
};
use super::model::{knn_indices, ModelParams};

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

/// A preprocessed cloud with cached features, neighbor indices and targets.
#[derive(Debug, Clone)]
pub struct TrainCloud {
    pub features: Array2<f64>,
    pub coords: Array2<f64>,
    pub knn: Array2<usize>,
    pub targets: Vec<Target>,
    pub instance_ids: Vec<u32>,
}

impl TrainCloud {
    /// Prepare a fixed cloud for a model: extract (optionally standardized)
    /// features, precompute the k-nearest-neighbor index, map the labels.
    pub fn prepare(
        cloud: &FixedCloud,
        cfg: &ClassConfig,
        stats: Option<&FeatureStats>,
        k_neighbors: usize,
    ) -> Result<Self> {
        let coords = cloud.coords();
        let knn = knn_indices(&coords, k_neighbors)?;
        Ok(Self {
            features: featurize(cloud, stats),
            coords,
            knn,
            targets: cloud.targets(cfg),
            instance_ids: cloud.instance_ids(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn roles(&self) -> Vec<PointRole> {
        PointRole::from_targets(&self.targets, &self.instance_ids)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    /// Clouds per gradient step.
    pub batch: usize,
    /// Number of points the similarity/confidence losses see per step.
    pub pair_subsample: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            steps: 1000,
            batch: 1,
            pair_subsample: 1024,
            seed: 0,
        }
    }
}

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub semantic: f64,
    pub similarity: f64,
    pub confidence: f64,
    pub total: f64,
}

// ---------------------------------------------------------------------------
// Loss terms over the full model (shared by training and gradient checks)
// ---------------------------------------------------------------------------

/// One of the three trainable loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Semantic,
    Similarity,
    Confidence,
}

fn subsample_or_all(cloud: &TrainCloud, subsample: Option<&[usize]>) -> Vec<usize> {
    match subsample {
        Some(indices) => indices.to_vec(),
        None => (0..cloud.len()).collect(),
    }
}

fn gather_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (local, &global) in indices.iter().enumerate() {
        out.row_mut(local).assign(&m.row(global));
    }
    out
}

/// Evaluate a single loss term through the network.
///
/// For the confidence term the regression targets may be pinned with
/// `conf_targets` (indexed like the subsample); training recomputes them
/// every step but treats them as constants, and finite-difference checks
/// must hold them fixed for the same reason.
pub fn loss_term_value(
    params: &ModelParams,
    cloud: &TrainCloud,
    weights: &LossWeights,
    term: LossTerm,
    subsample: Option<&[usize]>,
    conf_targets: Option<&[Option<f64>]>,
) -> Result<f64> {
    let (output, _) = params.forward_with_knn(&cloud.features, &cloud.knn)?;
    match term {
        LossTerm::Semantic => {
            let (value, _) = semantic_loss(&output.logits, &cloud.targets, &weights.class_weights);
            Ok(value)
        }
        LossTerm::Similarity => {
            let sub = subsample_or_all(cloud, subsample);
            let emb = gather_rows(&output.embeddings, &sub);
            let roles = cloud.roles();
            let sub_roles: Vec<PointRole> = sub.iter().map(|&i| roles[i]).collect();
            let s = similarity_matrix(&emb);
            let (value, _, _) = similarity_loss(&s, &sub_roles, weights);
            Ok(value)
        }
        LossTerm::Confidence => {
            let sub = subsample_or_all(cloud, subsample);
            let roles = cloud.roles();
            let sub_roles: Vec<PointRole> = sub.iter().map(|&i| roles[i]).collect();
            let targets = match conf_targets {
                Some(t) => t.to_vec(),
                None => {
                    let emb = gather_rows(&output.embeddings, &sub);
                    confidence_targets(&similarity_matrix(&emb), &sub_roles, weights.k1)
                }
            };
            let conf: Array1<f64> = sub.iter().map(|&i| output.confidence[i]).collect();
            let (value, _) = confidence_loss(&conf, &targets);
            Ok(value)
        }
    }
}

/// Evaluate a single loss term and its gradient with respect to every model
/// parameter (flattened as in [`ModelParams::to_flat`]).
pub fn loss_term_with_gradients(
    params: &ModelParams,
    cloud: &TrainCloud,
    weights: &LossWeights,
    term: LossTerm,
    subsample: Option<&[usize]>,
    conf_targets: Option<&[Option<f64>]>,
) -> Result<(f64, Vec<f64>)> {
    let (output, cache) = params.forward_with_knn(&cloud.features, &cloud.knn)?;
    let n = cloud.len();
    let mut d_logits = Array2::zeros(output.logits.raw_dim());
    let mut d_emb = Array2::zeros(output.embeddings.raw_dim());
    let mut d_conf = Array1::zeros(n);

    let value = match term {
        LossTerm::Semantic => {
            let (value, grad) =
                semantic_loss(&output.logits, &cloud.targets, &weights.class_weights);
            d_logits = grad;
            value
        }
        LossTerm::Similarity => {
            let sub = subsample_or_all(cloud, subsample);
            let emb = gather_rows(&output.embeddings, &sub);
            let roles = cloud.roles();
            let sub_roles: Vec<PointRole> = sub.iter().map(|&i| roles[i]).collect();
            let s = similarity_matrix(&emb);
            let (value, d_s, _) = similarity_loss(&s, &sub_roles, weights);
            let d_emb_sub = similarity_matrix_backward(&emb, &s, &d_s);
            for (local, &global) in sub.iter().enumerate() {
                let mut row = d_emb.row_mut(global);
                row += &d_emb_sub.row(local);
            }
            value
        }
        LossTerm::Confidence => {
            let sub = subsample_or_all(cloud, subsample);
            let roles = cloud.roles();
            let sub_roles: Vec<PointRole> = sub.iter().map(|&i| roles[i]).collect();
            let targets = match conf_targets {
                Some(t) => t.to_vec(),
                None => {
                    let emb = gather_rows(&output.embeddings, &sub);
                    confidence_targets(&similarity_matrix(&emb), &sub_roles, weights.k1)
                }
            };
            let conf: Array1<f64> = sub.iter().map(|&i| output.confidence[i]).collect();
            let (value, d_conf_sub) = confidence_loss(&conf, &targets);
            for (local, &global) in sub.iter().enumerate() {
                d_conf[global] = d_conf_sub[local];
            }
            value
        }
    };

    let grads = params.backward(&cache, &d_logits, &d_emb, &d_conf);
    Ok((value, grads.to_flat()))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Train in place, returning the per-step loss curve. Deterministic in
/// `config.seed`; aborts with diagnostics when the loss turns non-finite.
pub fn train(
    params: &mut ModelParams,
    dataset: &[TrainCloud],
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<Vec<LossRecord>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    weights.validate()?;
    if weights.class_weights.len() != params.config.num_classes {
        return Err(Error::InvalidConfig(format!(
            "{} class weights for a {}-class model",
            weights.class_weights.len(),
            params.config.num_classes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len());
    let mut curve = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut grad_acc = vec![0.0; flat.len()];
        let mut semantic_acc = 0.0;
        let mut similarity_acc = 0.0;
        let mut confidence_acc = 0.0;

        for _ in 0..config.batch.max(1) {
            let cloud = &dataset[rng.gen_range(0..dataset.len())];
            let sub = sample_indices(&mut rng, cloud.len(), config.pair_subsample);
            let (parts, grads) = step_loss_and_grads(params, cloud, weights, &sub)?;
            semantic_acc += parts.0;
            similarity_acc += parts.1;
            confidence_acc += parts.2;
            for (g, acc) in grads.iter().zip(grad_acc.iter_mut()) {
                *acc += g;
            }
        }

        let inv_batch = 1.0 / config.batch.max(1) as f64;
        for g in grad_acc.iter_mut() {
            *g *= inv_batch;
        }
        let semantic = semantic_acc * inv_batch;
        let similarity = similarity_acc * inv_batch;
        let confidence = confidence_acc * inv_batch;
        let total = weights.w_semantic * semantic
            + weights.w_similarity * similarity
            + weights.w_confidence * confidence;

        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                details: format!(
                    "semantic {semantic:.6e}, similarity {similarity:.6e}, \
                     confidence {confidence:.6e}"
                ),
            });
        }

        adam.step(&mut flat, &grad_acc, config.lr);
        params.assign_from_flat(&flat);
        curve.push(LossRecord {
            step,
            semantic,
            similarity,
            confidence,
            total,
        });
    }
    Ok(curve)
}

fn sample_indices(rng: &mut impl Rng, n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Mixed loss over one cloud: semantic on all points, similarity and
/// confidence on the subsample. Returns the three raw loss values and the
/// flat gradient of the mixed total.
fn step_loss_and_grads(
    params: &ModelParams,
    cloud: &TrainCloud,
    weights: &LossWeights,
    sub: &[usize],
) -> Result<((f64, f64, f64), Vec<f64>)> {
    let (output, cache) = params.forward_with_knn(&cloud.features, &cloud.knn)?;

    // Semantic term on every point.
    let (semantic, mut d_logits) =
        semantic_loss(&output.logits, &cloud.targets, &weights.class_weights);
    d_logits.mapv_inplace(|v| v * weights.w_semantic);

    // Pair terms on the subsample.
    let roles = cloud.roles();
    let sub_roles: Vec<PointRole> = sub.iter().map(|&i| roles[i]).collect();
    let emb = gather_rows(&output.embeddings, sub);
    let s = similarity_matrix(&emb);

    let (similarity, d_s, _) = similarity_loss(&s, &sub_roles, weights);
    let d_emb_sub = similarity_matrix_backward(&emb, &s, &d_s);
    let mut d_emb = Array2::zeros(output.embeddings.raw_dim());
    for (local, &global) in sub.iter().enumerate() {
        let mut row = d_emb.row_mut(global);
        row.scaled_add(weights.w_similarity, &d_emb_sub.row(local));
    }

    // Confidence regression toward the proposal/instance overlap; the
    // targets are constants of the step.
    let targets = confidence_targets(&s, &sub_roles, weights.k1);
    let conf: Array1<f64> = sub.iter().map(|&i| output.confidence[i]).collect();
    let (confidence, d_conf_sub) = confidence_loss(&conf, &targets);
    let mut d_conf = Array1::zeros(cloud.len());
    for (local, &global) in sub.iter().enumerate() {
        d_conf[global] = weights.w_confidence * d_conf_sub[local];
    }

    let grads = params.backward(&cache, &d_logits, &d_emb, &d_conf);
    Ok(((semantic, similarity, confidence), grads.to_flat()))
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

const CHECKPOINT_SCHEMA: &str = "radar-ghosts/model";
const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to run a trained model later: weights, class
/// configuration, loss thresholds and feature statistics. Serializes to
/// JSON and round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    schema: String,
    version: u32,
    pub class_config: ClassConfig,
    pub preprocess: crate::preprocess::PreprocessConfig,
    pub loss_weights: LossWeights,
    pub feature_stats: Option<FeatureStats>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(
        class_config: ClassConfig,
        preprocess: crate::preprocess::PreprocessConfig,
        loss_weights: LossWeights,
        feature_stats: Option<FeatureStats>,
        params: ModelParams,
    ) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA.into(),
            version: CHECKPOINT_VERSION,
            class_config,
            preprocess,
            loss_weights,
            feature_stats,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersion {
                found: ckpt.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if !ckpt.params.all_finite() {
            return Err(Error::Checkpoint("non-finite weights".into()));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::model::ModelConfig;

    /// Build a small two-cluster cloud: one foreground instance per cluster
    /// plus background scatter.
    fn toy_cloud(n_per_cluster: usize, n_bg: usize, seed: u64, k: usize) -> TrainCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per_cluster + n_bg;
        let mut features = Array2::zeros((n, crate::preprocess::NUM_FEATURES));
        let mut targets = Vec::new();
        let mut instances = Vec::new();
        for i in 0..n {
            let (center, doppler, target, instance) = if i < n_per_cluster {
                ((2.0, 0.0), 1.2, Target::Class(1), 1)
            } else if i < 2 * n_per_cluster {
                ((6.0, 2.0), -0.8, Target::Class(1), 2)
            } else {
                (
                    (rng.gen_range(1.0..8.0), rng.gen_range(-3.0..3.0)),
                    0.0,
                    Target::BACKGROUND,
                    0,
                )
            };
            features[[i, 0]] = center.0 + rng.gen_range(-0.2..0.2);
            features[[i, 1]] = center.1 + rng.gen_range(-0.2..0.2);
            features[[i, 2]] = rng.gen_range(5.0..20.0);
            features[[i, 3]] = doppler + rng.gen_range(-0.05..0.05);
            features[[i, 4]] = 0.0;
            targets.push(target);
            instances.push(instance);
        }
        let coords = features.slice(ndarray::s![.., ..2]).to_owned();
        let knn = knn_indices(&coords, k).unwrap();
        TrainCloud {
            features,
            coords,
            knn,
            targets,
            instance_ids: instances,
        }
    }

    fn tiny_model(num_classes: usize) -> ModelParams {
        ModelParams::init(
            ModelConfig {
                hidden: 4,
                embed_dim: 2,
                k_neighbors: 3,
                num_classes,
            },
            42,
        )
    }

    #[test]
    fn test_zero_lr_leaves_params_unchanged() {
        let mut params = tiny_model(2);
        let before = params.clone();
        let cloud = toy_cloud(4, 4, 1, 3);
        let weights = LossWeights::uniform(2);
        let config = TrainConfig {
            lr: 0.0,
            steps: 1,
            ..TrainConfig::default()
        };
        train(&mut params, &[cloud], &weights, &config).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn test_training_determinism() {
        let cloud = toy_cloud(5, 6, 2, 3);
        let weights = LossWeights::uniform(2);
        let config = TrainConfig {
            steps: 20,
            pair_subsample: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut a = tiny_model(2);
        let curve_a = train(&mut a, &[cloud.clone()], &weights, &config).unwrap();
        let mut b = tiny_model(2);
        let curve_b = train(&mut b, &[cloud], &weights, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(curve_a.len(), curve_b.len());
        for (ra, rb) in curve_a.iter().zip(&curve_b) {
            assert_eq!(ra.total, rb.total);
        }
    }

    #[test]
    fn test_similarity_loss_decreases_on_toy_clusters() {
        let cloud = toy_cloud(8, 8, 3, 4);
        let weights = LossWeights::uniform(2);
        let config = TrainConfig {
            lr: 3e-3,
            steps: 500,
            pair_subsample: 24,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut params = ModelParams::init(
            ModelConfig {
                hidden: 8,
                embed_dim: 4,
                k_neighbors: 4,
                num_classes: 2,
            },
            7,
        );
        let curve = train(&mut params, &[cloud], &weights, &config).unwrap();
        // Mean similarity loss over 50-step windows decreases monotonically.
        let window_means: Vec<f64> = curve
            .chunks(50)
            .map(|c| c.iter().map(|r| r.similarity).sum::<f64>() / c.len() as f64)
            .collect();
        for pair in window_means.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-6,
                "similarity loss not decreasing: {window_means:?}"
            );
        }
        assert!(window_means.last().unwrap() < &window_means[0]);
    }

    #[test]
    fn test_gradient_check_all_terms() {
        // Analytic gradients against central finite differences on a tiny
        // model; hinge margins are enforced by discarding unlucky draws.
        let weights = LossWeights::uniform(2);
        let h = 1e-5;
        let mut checked = 0;
        let mut trial = 0u64;
        while checked < 5 {
            trial += 1;
            let cloud = toy_cloud(3, 2, 100 + trial, 3);
            let params = ModelParams::init(
                ModelConfig {
                    hidden: 4,
                    embed_dim: 2,
                    k_neighbors: 3,
                    num_classes: 2,
                },
                200 + trial,
            );
            // Enforce margins around the hinge thresholds.
            let (out, _) = params
                .forward_with_knn(&cloud.features, &cloud.knn)
                .unwrap();
            let s = similarity_matrix(&out.embeddings);
            let near_kink = (0..cloud.len()).any(|i| {
                (i + 1..cloud.len()).any(|j| {
                    let d = s[[i, j]];
                    (d - weights.k1).abs() < 1e-3 || (d - weights.k2).abs() < 1e-3 || d < 1e-3
                })
            });
            if near_kink {
                continue;
            }
            checked += 1;

            let conf_targets = {
                let roles = cloud.roles();
                confidence_targets(&s, &roles, weights.k1)
            };

            for term in [LossTerm::Semantic, LossTerm::Similarity, LossTerm::Confidence] {
                let ct = matches!(term, LossTerm::Confidence).then_some(conf_targets.as_slice());
                let (_, analytic) =
                    loss_term_with_gradients(&params, &cloud, &weights, term, None, ct).unwrap();
                let flat = params.to_flat();
                let mut worst = 0.0f64;
                for p in 0..flat.len() {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    let mut fp = flat.clone();
                    fp[p] += h;
                    plus.assign_from_flat(&fp);
                    fp[p] = flat[p] - h;
                    minus.assign_from_flat(&fp);
                    let lp =
                        loss_term_value(&plus, &cloud, &weights, term, None, ct).unwrap();
                    let lm =
                        loss_term_value(&minus, &cloud, &weights, term, None, ct).unwrap();
                    let numeric = (lp - lm) / (2.0 * h);
                    let denom = analytic[p].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max((analytic[p] - numeric).abs() / denom);
                }
                assert!(
                    worst < 1e-4,
                    "{term:?}: max relative gradient error {worst:.3e}"
                );
            }
        }
    }

    #[test]
    fn test_divergence_reports_step() {
        let cloud = toy_cloud(3, 3, 9, 3);
        let mut weights = LossWeights::uniform(2);
        weights.class_weights = vec![1e308, 1e308];
        let mut params = tiny_model(2);
        // Gigantic class weights overflow the loss immediately.
        let config = TrainConfig {
            lr: 1e-3,
            steps: 5,
            pair_subsample: 8,
            ..TrainConfig::default()
        };
        match train(&mut params, &[cloud], &weights, &config) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn test_checkpoint_round_trip_exact() {
        let params = tiny_model(3);
        let ckpt = Checkpoint::new(
            ClassConfig {
                granularity: crate::labels::Granularity::Merged,
                labelset: crate::labels::LabelSet::GhostMerged,
            },
            crate::preprocess::PreprocessConfig::default(),
            LossWeights::uniform(3),
            Some(FeatureStats::identity()),
            params,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, loaded);
        // Byte-identical re-serialization.
        assert_eq!(ckpt.to_json().unwrap(), loaded.to_json().unwrap());
    }
}
