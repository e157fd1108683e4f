//! Loss terms: frequency-balanced semantic cross entropy, the double-hinge
//! similarity loss over embedding distances, and confidence regression.
//!
//! Background/background pairs and everything touching an ignore point get
//! no loss. A background/foreground pair must exceed the large threshold K2;
//! foreground pairs are pulled together (same instance) or pushed apart
//! (hinge at K1 within a class, K2 across classes). Pair losses are
//! rebalanced by the per-batch counts of the two pair categories.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassConfig, Target};
use crate::preprocess::FixedCloud;

/// Loss hyperparameters shared by training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Per-class scale factors of the semantic loss (index 0 = background).
    pub class_weights: Vec<f64>,
    /// Proposal / same-class hinge threshold.
    pub k1: f64,
    /// Different-class and background hinge threshold; must exceed `k1`.
    pub k2: f64,
    /// Extra weight of the same-class/different-instance hinge.
    pub alpha: f64,
    /// Mix coefficients of the three loss terms.
    pub w_semantic: f64,
    pub w_similarity: f64,
    pub w_confidence: f64,
}

impl LossWeights {
    /// Uniform class weights and default thresholds (K1 = 1, K2 = 2,
    /// alpha = 2).
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            class_weights: vec![1.0; num_classes],
            k1: 1.0,
            k2: 2.0,
            alpha: 2.0,
            w_semantic: 1.0,
            w_similarity: 1.0,
            w_confidence: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > self.k1) {
            return Err(Error::InvalidConfig(
                "similarity thresholds require K2 > K1 > 0".into(),
            ));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("class weights must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Class frequency balancing
// ---------------------------------------------------------------------------

/// Frequency-balancing weight per class: `s = 1 / (c * s_l)` with `c` the
/// number of classes and `s_l` the share of class `l`.
pub fn class_weight_from_shares(shares: &[f64]) -> Result<Vec<f64>> {
    let c = shares.len() as f64;
    shares
        .iter()
        .enumerate()
        .map(|(l, &share)| {
            if share > 0.0 {
                Ok(1.0 / (c * share))
            } else {
                Err(Error::ClassAbsent(format!("class {l}")))
            }
        })
        .collect()
}

/// Class weights over a training split: count non-ignore points per class
/// and apply the share formula. Errors when a class never occurs.
pub fn class_weights_from_dataset<'a>(
    clouds: impl IntoIterator<Item = &'a FixedCloud>,
    cfg: &ClassConfig,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; cfg.num_classes()];
    let mut total = 0usize;
    for cloud in clouds {
        for target in cloud.targets(cfg) {
            if let Target::Class(c) = target {
                counts[c] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no labeled points in the training split"));
    }
    let names = cfg.class_names();
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    for (l, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::ClassAbsent(names[l].clone()));
        }
    }
    class_weight_from_shares(&shares)
}

// ---------------------------------------------------------------------------
// Semantic loss
// ---------------------------------------------------------------------------

/// Frequency-balanced softmax cross entropy, averaged over non-ignore
/// points. Returns the loss and its gradient with respect to the logits.
pub fn semantic_loss(
    logits: &Array2<f64>,
    targets: &[Target],
    class_weights: &[f64],
) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let c = logits.ncols();
    assert_eq!(targets.len(), n, "targets and logits disagree");
    assert_eq!(class_weights.len(), c, "class weights and logits disagree");

    let mut d_logits = Array2::zeros((n, c));
    let n_valid = targets.iter().filter(|t| !t.is_ignore()).count();
    if n_valid == 0 {
        return (0.0, d_logits);
    }
    let inv = 1.0 / n_valid as f64;

    let mut loss = 0.0;
    for i in 0..n {
        let target = match targets[i] {
            Target::Class(t) => t,
            Target::Ignore => continue,
        };
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row.iter() {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        let w = class_weights[target];
        loss += w * (log_sum - row[target]);
        for j in 0..c {
            let p = (row[j] - log_sum).exp();
            d_logits[[i, j]] = w * inv * (p - if j == target { 1.0 } else { 0.0 });
        }
    }
    (loss * inv, d_logits)
}

// ---------------------------------------------------------------------------
// Similarity matrix and loss
// ---------------------------------------------------------------------------

/// Pairwise Euclidean distances between embedding rows.
pub fn similarity_matrix(embeddings: &Array2<f64>) -> Array2<f64> {
    let n = embeddings.nrows();
    let gram = embeddings.dot(&embeddings.t());
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0);
            let d = d2.sqrt();
            s[[i, j]] = d;
            s[[j, i]] = d;
        }
    }
    s
}

/// Chain a gradient on the distance matrix back to the embeddings. Only the
/// upper triangle of `d_s` is read; zero-distance pairs get no gradient.
pub fn similarity_matrix_backward(
    embeddings: &Array2<f64>,
    s: &Array2<f64>,
    d_s: &Array2<f64>,
) -> Array2<f64> {
    let n = embeddings.nrows();
    let e = embeddings.ncols();
    let mut d_emb = Array2::zeros((n, e));
    for i in 0..n {
        for j in (i + 1)..n {
            let g = d_s[[i, j]];
            if g == 0.0 || s[[i, j]] <= 0.0 {
                continue;
            }
            let scale = g / s[[i, j]];
            for k in 0..e {
                let diff = embeddings[[i, k]] - embeddings[[j, k]];
                d_emb[[i, k]] += scale * diff;
                d_emb[[j, k]] -= scale * diff;
            }
        }
    }
    d_emb
}

/// Role of a point in the pair losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    Ignore,
    Background,
    Foreground { instance: u32, class: usize },
}

impl PointRole {
    /// Derive roles from training targets and instance ids.
    pub fn from_targets(targets: &[Target], instance_ids: &[u32]) -> Vec<PointRole> {
        targets
            .iter()
            .zip(instance_ids)
            .map(|(t, &instance)| match t {
                Target::Ignore => PointRole::Ignore,
                Target::Class(0) => PointRole::Background,
                Target::Class(c) => PointRole::Foreground {
                    instance,
                    class: *c,
                },
            })
            .collect()
    }
}

/// Pair-category counts of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairLossTally {
    /// Pairs with two foreground points.
    pub fg_fg: usize,
    /// Pairs with exactly one background point.
    pub bg_fg: usize,
}

/// Double-hinge similarity loss over unordered pairs, balanced by pair
/// category. Returns the loss, its gradient with respect to the distance
/// matrix (upper triangle), and the category tally.
pub fn similarity_loss(
    s: &Array2<f64>,
    roles: &[PointRole],
    weights: &LossWeights,
) -> (f64, Array2<f64>, PairLossTally) {
    let n = s.nrows();
    assert_eq!(roles.len(), n, "roles and similarity matrix disagree");
    let mut d_s = Array2::zeros((n, n));

    // First pass: count the two pair categories.
    let mut tally = PairLossTally::default();
    for i in 0..n {
        for j in (i + 1)..n {
            match (roles[i], roles[j]) {
                (PointRole::Ignore, _) | (_, PointRole::Ignore) => {}
                (PointRole::Background, PointRole::Background) => {}
                (PointRole::Foreground { .. }, PointRole::Foreground { .. }) => tally.fg_fg += 1,
                _ => tally.bg_fg += 1,
            }
        }
    }
    if tally.fg_fg == 0 && tally.bg_fg == 0 {
        return (0.0, d_s, tally);
    }
    let w_fg = if tally.fg_fg > 0 {
        1.0 / (2.0 * tally.fg_fg as f64)
    } else {
        0.0
    };
    let w_bg = if tally.bg_fg > 0 {
        1.0 / (2.0 * tally.bg_fg as f64)
    } else {
        0.0
    };

    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = s[[i, j]];
            // (per-pair loss, d loss / d distance, category weight)
            let (value, slope, w) = match (roles[i], roles[j]) {
                (PointRole::Ignore, _) | (_, PointRole::Ignore) => continue,
                (PointRole::Background, PointRole::Background) => continue,
                (
                    PointRole::Foreground {
                        instance: ia,
                        class: ca,
                    },
                    PointRole::Foreground {
                        instance: ib,
                        class: cb,
                    },
                ) => {
                    if ia == ib {
                        (d, 1.0, w_fg)
                    } else if ca == cb {
                        let hinge = (weights.k1 - d).max(0.0);
                        (
                            weights.alpha * hinge,
                            if hinge > 0.0 { -weights.alpha } else { 0.0 },
                            w_fg,
                        )
                    } else {
                        let hinge = (weights.k2 - d).max(0.0);
                        (hinge, if hinge > 0.0 { -1.0 } else { 0.0 }, w_fg)
                    }
                }
                _ => {
                    let hinge = (weights.k2 - d).max(0.0);
                    (hinge, if hinge > 0.0 { -1.0 } else { 0.0 }, w_bg)
                }
            };
            loss += w * value;
            d_s[[i, j]] = w * slope;
        }
    }
    (loss, d_s, tally)
}

// ---------------------------------------------------------------------------
// Confidence regression
// ---------------------------------------------------------------------------

/// Regression target per point: for a foreground point the IoU between its
/// row proposal `{j : S_ij < K1}` and its ground-truth instance, 0 for
/// background, none for ignore points.
pub fn confidence_targets(
    s: &Array2<f64>,
    roles: &[PointRole],
    k1: f64,
) -> Vec<Option<f64>> {
    let n = s.nrows();
    let mut out = vec![None; n];
    for i in 0..n {
        match roles[i] {
            PointRole::Ignore => {}
            PointRole::Background => out[i] = Some(0.0),
            PointRole::Foreground { instance, .. } => {
                let mut intersection = 0usize;
                let mut union = 0usize;
                for j in 0..n {
                    if roles[j] == PointRole::Ignore {
                        continue;
                    }
                    let in_proposal = s[[i, j]] < k1;
                    let in_gt = matches!(
                        roles[j],
                        PointRole::Foreground { instance: gi, .. } if gi == instance
                    );
                    if in_proposal && in_gt {
                        intersection += 1;
                    }
                    if in_proposal || in_gt {
                        union += 1;
                    }
                }
                out[i] = Some(intersection as f64 / union as f64);
            }
        }
    }
    out
}

/// Mean squared error over points with a target. Returns the loss and its
/// gradient with respect to the confidences.
pub fn confidence_loss(
    confidence: &Array1<f64>,
    targets: &[Option<f64>],
) -> (f64, Array1<f64>) {
    let n = confidence.len();
    assert_eq!(targets.len(), n, "confidence targets disagree");
    let mut d_conf = Array1::zeros(n);
    let n_valid = targets.iter().filter(|t| t.is_some()).count();
    if n_valid == 0 {
        return (0.0, d_conf);
    }
    let inv = 1.0 / n_valid as f64;
    let mut loss = 0.0;
    for i in 0..n {
        if let Some(t) = targets[i] {
            let diff = confidence[i] - t;
            loss += diff * diff;
            d_conf[i] = 2.0 * diff * inv;
        }
    }
    (loss * inv, d_conf)
}
