//! From network outputs to instance detections.
//!
//! The similarity route thresholds each row of the embedding-distance matrix
//! into a group proposal, scores it, and prunes overlaps with non-maximum
//! suppression (overlapping proposals are discarded, not merged). The
//! baseline route filters background points by semantic probability and
//! clusters the rest with DBSCAN. Both routes report de-duplicated origin
//! indices and drop instances below three points.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::nnet::ForwardOutput;
use crate::preprocess::FixedCloud;

/// Minimum number of (de-duplicated) points of a reported instance.
pub const MIN_INSTANCE_POINTS: usize = 3;

/// A predicted instance over de-duplicated origin indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub point_indices: BTreeSet<usize>,
    /// Predicted foreground class (>= 1).
    pub class: usize,
    pub score: f64,
}

// ---------------------------------------------------------------------------
// Similarity group proposals
// ---------------------------------------------------------------------------

/// A thresholded similarity-matrix row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawProposal {
    /// Row that generated the proposal.
    pub seed: usize,
    /// Cloud positions with embedding distance below K1 (includes the seed).
    pub points: Vec<usize>,
    /// Confidence of the seed point.
    pub confidence: f64,
}

/// One proposal per matrix row: `{j : S_ij < K1}`; proposals with fewer than
/// three points are dropped.
pub fn sgpn_propose(s: &Array2<f64>, confidence: &Array1<f64>, k1: f64) -> Vec<RawProposal> {
    let n = s.nrows();
    let mut proposals = Vec::new();
    for i in 0..n {
        let points: Vec<usize> = (0..n).filter(|&j| s[[i, j]] < k1).collect();
        if points.len() >= MIN_INSTANCE_POINTS {
            proposals.push(RawProposal {
                seed: i,
                points,
                confidence: confidence[i],
            });
        }
    }
    proposals
}

/// A proposal with its class vote and score, ready for suppression.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProposal {
    pub seed: usize,
    pub points: Vec<usize>,
    pub class: usize,
    pub score: f64,
}

fn iou_sorted(a: &[usize], b: &[usize]) -> f64 {
    let mut i = 0;
    let mut j = 0;
    let mut intersection = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                intersection += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Greedy non-maximum suppression: keep proposals in descending score order
/// (ties to the lower seed index) and discard any whose point IoU with a
/// kept proposal exceeds the threshold.
pub fn nms(proposals: &[ScoredProposal], iou_threshold: f64) -> Vec<ScoredProposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score
            .partial_cmp(&proposals[a].score)
            .unwrap()
            .then(proposals[a].seed.cmp(&proposals[b].seed))
    });
    let mut kept: Vec<ScoredProposal> = Vec::new();
    for idx in order {
        let candidate = &proposals[idx];
        let suppressed = kept
            .iter()
            .any(|k| iou_sorted(&k.points, &candidate.points) > iou_threshold);
        if !suppressed {
            kept.push(candidate.clone());
        }
    }
    kept
}

// ---------------------------------------------------------------------------
// Instance classification
// ---------------------------------------------------------------------------

fn softmax_row(logits: &Array2<f64>, i: usize) -> Vec<f64> {
    let row = logits.row(i);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Predicted class and score of an instance.
///
/// Every point votes for its best non-background class; the majority wins
/// (ties to the class with the higher mean probability). The score is the
/// mean probability of the winning class over all instance points times the
/// mean confidence (1.0 per point when no confidence head is available).
pub fn classify_instance(
    point_indices: &[usize],
    logits: &Array2<f64>,
    confidence: Option<&Array1<f64>>,
) -> (usize, f64) {
    assert!(!point_indices.is_empty(), "empty instance");
    let num_classes = logits.ncols();
    let mut votes = vec![0usize; num_classes];
    let mut prob_sums = vec![0.0f64; num_classes];
    let mut conf_sum = 0.0;
    for &i in point_indices {
        let probs = softmax_row(logits, i);
        let mut best = 1;
        for c in 2..num_classes {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        votes[best] += 1;
        for c in 1..num_classes {
            prob_sums[c] += probs[c];
        }
        conf_sum += confidence.map(|conf| conf[i]).unwrap_or(1.0);
    }
    let mut winner = 1;
    for c in 2..num_classes {
        if votes[c] > votes[winner]
            || (votes[c] == votes[winner] && prob_sums[c] > prob_sums[winner])
        {
            winner = c;
        }
    }
    let n = point_indices.len() as f64;
    let score = (prob_sums[winner] / n) * (conf_sum / n);
    (winner, score)
}

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

/// Parameters of the clustering baseline, including the weighted feature
/// space (x, y, w_doppler * doppler, w_time * rel_timestamp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    /// Meters of clustering distance per m/s of Doppler difference.
    pub w_doppler: f64,
    /// Meters of clustering distance per second of cycle-age difference.
    pub w_time: f64,
    /// Background-probability threshold above which points are removed.
    pub bg_threshold: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 1.2,
            min_pts: 2,
            w_doppler: 0.6,
            w_time: 2.0,
            bg_threshold: 1.0 / 3.0,
        }
    }
}

/// Standard DBSCAN over row vectors: returns a cluster id per point (`None`
/// = noise). Deterministic given the input order: clusters are numbered in
/// formation order and border points join the earliest-formed cluster that
/// reaches them.
pub fn dbscan_cluster(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let eps_sq = eps * eps;
    let dist_sq = |a: usize, b: usize| -> f64 {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let region = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| dist_sq(i, j) <= eps_sq).collect()
    };

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unvisited,
        Noise,
        Cluster(usize),
    }
    let mut state = vec![State::Unvisited; n];
    let mut next_cluster = 0usize;

    for i in 0..n {
        if state[i] != State::Unvisited {
            continue;
        }
        let neighbors = region(i);
        if neighbors.len() < min_pts {
            state[i] = State::Noise;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        state[i] = State::Cluster(cluster);
        let mut queue: std::collections::VecDeque<usize> = neighbors.into();
        while let Some(j) = queue.pop_front() {
            match state[j] {
                State::Cluster(_) => continue,
                State::Noise => {
                    // Border point claimed by the first cluster to reach it.
                    state[j] = State::Cluster(cluster);
                    continue;
                }
                State::Unvisited => {
                    let nb = region(j);
                    if nb.len() >= min_pts {
                        state[j] = State::Cluster(cluster);
                        queue.extend(nb);
                    } else {
                        // Border point: in the cluster but not expandable.
                        state[j] = State::Cluster(cluster);
                    }
                }
            }
        }
    }

    state
        .into_iter()
        .map(|s| match s {
            State::Cluster(c) => Some(c),
            _ => None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

fn deduplicate(points: &[usize], origin_indices: &[usize]) -> BTreeSet<usize> {
    points.iter().map(|&i| origin_indices[i]).collect()
}

/// Full similarity-route inference on one cloud: propose from the distance
/// matrix, score, suppress, then de-duplicate resampled points via their
/// origin indices.
pub fn sgpn_pipeline(
    output: &ForwardOutput,
    origin_indices: &[usize],
    k1: f64,
    nms_iou: f64,
) -> Vec<Detection> {
    let s = crate::nnet::similarity_matrix(&output.embeddings);
    let raw = sgpn_propose(&s, &output.confidence, k1);
    let scored: Vec<ScoredProposal> = raw
        .into_iter()
        .map(|p| {
            let (class, base_score) = classify_instance(&p.points, &output.logits, None);
            // Mean class probability times mean confidence over the points.
            let conf_mean = p
                .points
                .iter()
                .map(|&i| output.confidence[i])
                .sum::<f64>()
                / p.points.len() as f64;
            ScoredProposal {
                seed: p.seed,
                points: p.points,
                class,
                score: base_score * conf_mean,
            }
        })
        .collect();
    let kept = nms(&scored, nms_iou);
    kept.into_iter()
        .filter_map(|p| {
            let point_indices = deduplicate(&p.points, origin_indices);
            (point_indices.len() >= MIN_INSTANCE_POINTS).then_some(Detection {
                point_indices,
                class: p.class,
                score: p.score,
            })
        })
        .collect()
}

/// Clustering-route inference: drop points the semantic head calls
/// background, cluster the rest in the weighted feature space, classify each
/// cluster with per-point confidence 1.
pub fn dbscan_pipeline(
    logits: &Array2<f64>,
    cloud: &FixedCloud,
    params: &DbscanParams,
) -> Vec<Detection> {
    let n = cloud.len();
    assert_eq!(logits.nrows(), n, "logits and cloud disagree");

    let kept: Vec<usize> = (0..n)
        .filter(|&i| softmax_row(logits, i)[0] <= params.bg_threshold)
        .collect();
    if kept.is_empty() {
        return Vec::new();
    }
    let rows: Vec<Vec<f64>> = kept
        .iter()
        .map(|&i| {
            let p = &cloud.points[i];
            vec![
                p.x,
                p.y,
                params.w_doppler * p.doppler,
                params.w_time * p.rel_timestamp,
            ]
        })
        .collect();
    let labels = dbscan_cluster(&rows, params.eps, params.min_pts);

    let n_clusters = labels.iter().flatten().max().map(|&c| c + 1).unwrap_or(0);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (local, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            clusters[*c].push(kept[local]);
        }
    }

    let origin_indices: Vec<usize> = cloud.points.iter().map(|p| p.origin_index).collect();
    clusters
        .into_iter()
        .filter(|c| c.len() >= MIN_INSTANCE_POINTS)
        .filter_map(|points| {
            let (class, score) = classify_instance(&points, logits, None);
            let point_indices = deduplicate(&points, &origin_indices);
            (point_indices.len() >= MIN_INSTANCE_POINTS).then_some(Detection {
                point_indices,
                class,
                score,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_propose_identical_embeddings() {
        let s = Array2::zeros((5, 5));
        let conf = Array1::from_elem(5, 0.9);
        let proposals = sgpn_propose(&s, &conf, 1.0);
        assert_eq!(proposals.len(), 5);
        for p in &proposals {
            assert_eq!(p.points, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn test_propose_drops_singletons() {
        let mut s = Array2::from_elem((4, 4), 5.0);
        for i in 0..4 {
            s[[i, i]] = 0.0;
        }
        let conf = Array1::from_elem(4, 0.9);
        assert!(sgpn_propose(&s, &conf, 1.0).is_empty());
    }

    #[test]
    fn test_propose_recovers_separated_clusters() {
        // Two embedding clusters of 4 and 3 points.
        let mut emb = Array2::zeros((7, 2));
        for i in 0..4 {
            emb[[i, 0]] = 0.01 * i as f64;
        }
        for i in 4..7 {
            emb[[i, 0]] = 10.0 + 0.01 * i as f64;
        }
        let s = crate::nnet::similarity_matrix(&emb);
        let conf = Array1::from_elem(7, 1.0);
        let proposals = sgpn_propose(&s, &conf, 1.0);
        assert_eq!(proposals.len(), 7);
        // Brute-force threshold check per row.
        for p in &proposals {
            let expected: Vec<usize> = (0..7).filter(|&j| s[[p.seed, j]] < 1.0).collect();
            assert_eq!(p.points, expected);
            if p.seed < 4 {
                assert_eq!(p.points, vec![0, 1, 2, 3]);
            } else {
                assert_eq!(p.points, vec![4, 5, 6]);
            }
        }
    }

    fn proposal(seed: usize, points: Vec<usize>, score: f64) -> ScoredProposal {
        ScoredProposal {
            seed,
            points,
            class: 1,
            score,
        }
    }

    #[test]
    fn test_nms_discards_overlapping() {
        let a = proposal(0, (1..=10).collect(), 0.9);
        let b = proposal(1, (1..=9).chain([11]).collect(), 0.8);
        let kept = nms(&[a.clone(), b], 0.5);
        assert_eq!(kept, vec![a]);
    }

    #[test]
    fn test_nms_keeps_disjoint() {
        let a = proposal(0, vec![1, 2, 3], 0.9);
        let b = proposal(1, vec![4, 5, 6], 0.1);
        let kept = nms(&[a.clone(), b.clone()], 0.5);
        assert_eq!(kept, vec![a, b]);
    }

    #[test]
    fn test_nms_matches_reference_greedy() {
        // Independent reference: sort by (score desc, seed asc) and keep a
        // proposal iff it overlaps no previously kept one.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let proposals: Vec<ScoredProposal> = (0..10)
                .map(|seed| {
                    let n = rng.gen_range(3..8);
                    let mut points: BTreeSet<usize> = BTreeSet::new();
                    while points.len() < n {
                        points.insert(rng.gen_range(0..15));
                    }
                    proposal(seed, points.into_iter().collect(), rng.gen_range(0.0..1.0))
                })
                .collect();

            let reference = {
                let mut order: Vec<usize> = (0..proposals.len()).collect();
                order.sort_by(|&a, &b| {
                    proposals[b]
                        .score
                        .partial_cmp(&proposals[a].score)
                        .unwrap()
                        .then(proposals[a].seed.cmp(&proposals[b].seed))
                });
                let mut kept: Vec<usize> = Vec::new();
                for idx in order {
                    let overlaps = kept.iter().any(|&k| {
                        let set_a: BTreeSet<usize> =
                            proposals[k].points.iter().cloned().collect();
                        let set_b: BTreeSet<usize> =
                            proposals[idx].points.iter().cloned().collect();
                        let inter = set_a.intersection(&set_b).count() as f64;
                        let union = set_a.union(&set_b).count() as f64;
                        inter / union > 0.5
                    });
                    if !overlaps {
                        kept.push(idx);
                    }
                }
                kept.into_iter()
                    .map(|i| proposals[i].clone())
                    .collect::<Vec<_>>()
            };

            assert_eq!(nms(&proposals, 0.5), reference);
        }
    }

    #[test]
    fn test_classify_instance_majority_and_score() {
        // Three classes (bg, ped, cycl); probabilities chosen to match the
        // worked vote (ped, ped, cycl) with p(ped) = (0.8, 0.7, 0.3).
        let logits = array![
            [0.1f64.ln(), 0.8f64.ln(), 0.1f64.ln()],
            [0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()],
            [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()],
        ];
        let conf = array![1.0, 1.0, 0.8];
        let (class, score) = classify_instance(&[0, 1, 2], &logits, Some(&conf));
        assert_eq!(class, 1);
        let expected = 0.6 * (2.8 / 3.0);
        assert!((score - expected).abs() < 1e-12, "score {score}");
    }

    #[test]
    fn test_classify_instance_unanimous_perfect() {
        let big = 50.0;
        let logits = array![[-big, big, -big], [-big, big, -big]];
        let (class, score) = classify_instance(&[0, 1], &logits, None);
        assert_eq!(class, 1);
        assert!((score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn test_classify_instance_tie_breaks_by_probability() {
        let logits = array![
            [0.0, 0.2f64.ln(), 0.7f64.ln()],
            [0.0, 0.6f64.ln(), 0.35f64.ln()],
        ];
        // One vote each; cycl has the larger probability mass (1.05 vs 0.8).
        let (class, _) = classify_instance(&[0, 1], &logits, None);
        assert_eq!(class, 2);
    }

    #[test]
    fn test_dbscan_chain_forms_one_cluster() {
        let pts = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]];
        let labels = dbscan_cluster(&pts, 1.0, 3);
        assert_eq!(labels, vec![Some(0), Some(0), Some(0)]);
    }

    #[test]
    fn test_dbscan_outlier_is_noise() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.0],
            vec![1.0, 0.0],
            vec![10.0, 0.0],
        ];
        let labels = dbscan_cluster(&pts, 1.0, 3);
        assert_eq!(labels[3], None);
    }

    /// Independent reachability-closure oracle.
    fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
        let n = points.len();
        let d = |a: usize, b: usize| -> f64 {
            points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let neighbors = |i: usize| (0..n).filter(|&j| d(i, j) <= eps).collect::<Vec<_>>();
        let core: Vec<bool> = (0..n).map(|i| neighbors(i).len() >= min_pts).collect();

        // Connected components over core-core edges, in index order.
        let mut comp: Vec<Option<usize>> = vec![None; n];
        let mut next = 0;
        for i in 0..n {
            if !core[i] || comp[i].is_some() {
                continue;
            }
            let id = next;
            next += 1;
            let mut stack = vec![i];
            comp[i] = Some(id);
            while let Some(p) = stack.pop() {
                for q in 0..n {
                    if core[q] && comp[q].is_none() && d(p, q) <= eps {
                        comp[q] = Some(id);
                        stack.push(q);
                    }
                }
            }
        }
        // Border points join the earliest-formed cluster with a core
        // neighbor.
        for i in 0..n {
            if core[i] || comp[i].is_some() {
                continue;
            }
            comp[i] = neighbors(i)
                .into_iter()
                .filter(|&j| core[j])
                .filter_map(|j| comp[j])
                .min();
        }
        comp
    }

    #[test]
    fn test_dbscan_matches_reachability_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..100 {
            let n = rng.gen_range(5..50);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
                .collect();
            let eps = rng.gen_range(0.3..2.0);
            let min_pts = rng.gen_range(1..5);
            let ours = dbscan_cluster(&pts, eps, min_pts);
            let oracle = dbscan_oracle(&pts, eps, min_pts);
            assert_eq!(ours, oracle, "trial {trial}, eps {eps}, min_pts {min_pts}");
        }
    }

    // -- pipelines ----------------------------------------------------------

    fn mini_cloud(n: usize) -> FixedCloud {
        use crate::preprocess::CloudPoint;
        use crate::types::Annotation;
        FixedCloud {
            points: (0..n)
                .map(|i| CloudPoint {
                    x: if i < n / 2 { 1.0 } else { 8.0 } + 0.05 * i as f64,
                    y: 0.0,
                    amplitude: 10.0,
                    doppler: 1.0,
                    rel_timestamp: 0.0,
                    cycle_age: 0,
                    origin_index: i,
                    annotation: Annotation::background(),
                })
                .collect(),
        }
    }

    #[test]
    fn test_dbscan_pipeline_background_filter_removes_everything() {
        let cloud = mini_cloud(6);
        // Background probability 0.4 > 1/3 for every point.
        let logits = Array2::from_shape_fn((6, 3), |(_, c)| {
            [0.4f64, 0.3, 0.3][c].ln()
        });
        let dets = dbscan_pipeline(&logits, &cloud, &DbscanParams::default());
        assert!(dets.is_empty());
    }

    #[test]
    fn test_dbscan_pipeline_detects_tight_cluster() {
        let cloud = mini_cloud(10);
        let logits = Array2::from_shape_fn((10, 3), |(_, c)| {
            [0.01f64, 0.98, 0.01][c].ln()
        });
        let dets = dbscan_pipeline(&logits, &cloud, &DbscanParams::default());
        assert_eq!(dets.len(), 2); // the two spatial groups
        for d in &dets {
            assert!(d.point_indices.len() >= MIN_INSTANCE_POINTS);
            assert_eq!(d.class, 1);
            assert!((d.score - 0.98).abs() < 1e-9); // conf fixed at 1.0
        }
    }

    #[test]
    fn test_sgpn_pipeline_two_separated_clusters() {
        // Oracle embeddings: two clusters far beyond K2.
        let n = 8;
        let mut emb = Array2::zeros((n, 2));
        for i in 0..4 {
            emb[[i, 0]] = 0.01 * i as f64;
        }
        for i in 4..n {
            emb[[i, 0]] = 10.0;
            emb[[i, 1]] = 0.01 * i as f64;
        }
        let logits = Array2::from_shape_fn((n, 3), |(i, c)| {
            if i < 4 {
                [0.05f64, 0.9, 0.05][c].ln()
            } else {
                [0.05f64, 0.05, 0.9][c].ln()
            }
        });
        let output = ForwardOutput {
            logits,
            embeddings: emb,
            confidence: Array1::from_elem(n, 0.8),
        };
        let origin: Vec<usize> = (0..n).collect();
        let dets = sgpn_pipeline(&output, &origin, 1.0, 0.5);
        assert_eq!(dets.len(), 2);
        let classes: BTreeSet<usize> = dets.iter().map(|d| d.class).collect();
        assert_eq!(classes, BTreeSet::from([1, 2]));
    }

    #[test]
    fn test_sgpn_pipeline_empty_foreground() {
        let n = 5;
        let mut emb = Array2::zeros((n, 2));
        for i in 0..n {
            emb[[i, 0]] = 10.0 * i as f64; // all pairwise distances > K1
        }
        let output = ForwardOutput {
            logits: Array2::zeros((n, 3)),
            embeddings: emb,
            confidence: Array1::from_elem(n, 0.5),
        };
        let origin: Vec<usize> = (0..n).collect();
        assert!(sgpn_pipeline(&output, &origin, 1.0, 0.5).is_empty());
    }

    #[test]
    fn test_pipelines_deduplicate_origin_indices() {
        // Points 3.. are duplicates of 0..3 (same origin).
        let n = 6;
        let emb = Array2::zeros((n, 2));
        let logits = Array2::from_shape_fn((n, 2), |(_, c)| [0.1f64, 0.9][c].ln());
        let output = ForwardOutput {
            logits,
            embeddings: emb,
            confidence: Array1::from_elem(n, 1.0),
        };
        let origin = vec![0, 1, 2, 0, 1, 2];
        let dets = sgpn_pipeline(&output, &origin, 1.0, 0.5);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].point_indices, BTreeSet::from([0, 1, 2]));
    }
}
