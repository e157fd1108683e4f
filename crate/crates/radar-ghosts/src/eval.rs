//! Point-wise detection metrics: IoU matching, average precision, semantic
//! F1 and false-positive attribution by ghost type.
//!
//! Detections are pooled across all evaluation windows of a split. Matching
//! is class-aware and greedy by descending score; each ground truth matches
//! at most once. Detections whose points lie mostly on ignore/sketchy
//! regions count neither as true nor as false positives, and ground-truth
//! instances with fewer than three de-duplicated points are treated as
//! ignore regions rather than matchable objects.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::labels::{map_labels, ClassConfig, Target};
use crate::preprocess::FixedCloud;
use crate::types::{Annotation, Label};

// ---------------------------------------------------------------------------
// Ground truth per evaluation window
// ---------------------------------------------------------------------------

/// A matchable ground-truth instance (de-duplicated origin indices).
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub instance_id: u32,
    /// Mapped foreground class index.
    pub class: usize,
    pub points: BTreeSet<usize>,
}

/// Ground truth of one evaluation window under a model configuration.
#[derive(Debug, Clone, Default)]
pub struct WindowGt {
    pub instances: Vec<GtInstance>,
    /// Origin indices excluded from scoring (ignore/sketchy annotations and
    /// instances below the minimum size).
    pub ignore_points: BTreeSet<usize>,
    /// Raw annotation per origin index, for attribution studies.
    pub annotations: BTreeMap<usize, Annotation>,
}

/// Build the window ground truth from the (resampled) cloud the detector
/// saw. Duplicated points collapse onto their origin index.
pub fn window_ground_truth(cloud: &FixedCloud, cfg: &ClassConfig) -> WindowGt {
    let mut annotations: BTreeMap<usize, Annotation> = BTreeMap::new();
    for p in &cloud.points {
        annotations.entry(p.origin_index).or_insert(p.annotation);
    }

    let mut ignore_points = BTreeSet::new();
    let mut grouped: BTreeMap<u32, (usize, BTreeSet<usize>)> = BTreeMap::new();
    for (&origin, ann) in &annotations {
        if ann.label == Label::Ignore || ann.sketchy {
            ignore_points.insert(origin);
            continue;
        }
        if let Target::Class(class) = map_labels(ann, cfg) {
            if class > 0 && ann.instance_id != 0 {
                grouped
                    .entry(ann.instance_id)
                    .or_insert_with(|| (class, BTreeSet::new()))
                    .1
                    .insert(origin);
            }
        }
    }

    let mut instances = Vec::new();
    for (instance_id, (class, points)) in grouped {
        if points.len() >= crate::detect::MIN_INSTANCE_POINTS {
            instances.push(GtInstance {
                instance_id,
                class,
                points,
            });
        } else {
            // Too small to be detectable; do not punish detections on it.
            ignore_points.extend(points);
        }
    }
    WindowGt {
        instances,
        ignore_points,
        annotations,
    }
}

// ---------------------------------------------------------------------------
// IoU and matching
// ---------------------------------------------------------------------------

/// Point-wise intersection over union; 0 when both sets are empty.
pub fn point_iou(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Outcome of matching one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetFlag {
    TruePositive,
    FalsePositive,
    /// Majority of points on ignore/sketchy ground truth.
    Ignored,
}

/// A detection with its matching outcome.
#[derive(Debug, Clone)]
pub struct MatchedDetection {
    pub window: usize,
    pub class: usize,
    pub score: f64,
    pub flag: DetFlag,
    pub points: BTreeSet<usize>,
}

/// Matching result over a pooled set of windows.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// All detections, sorted by descending score.
    pub detections: Vec<MatchedDetection>,
    /// Ground-truth instance count per class index.
    pub gt_per_class: Vec<usize>,
    /// Ground truths that stayed unmatched (false negatives).
    pub unmatched_gt: usize,
}

/// Greedy class-aware matching of pooled detections against pooled window
/// ground truths: descending score, each ground truth matched at most once,
/// a detection is a true positive when its best IoU exceeds the threshold.
pub fn match_detections(
    detections: &[(usize, Detection)],
    windows: &[WindowGt],
    num_classes: usize,
    iou_threshold: f64,
) -> MatchResult {
    let mut gt_per_class = vec![0usize; num_classes];
    for w in windows {
        for inst in &w.instances {
            gt_per_class[inst.class] += 1;
        }
    }

    // Sort by descending score with a deterministic tie order.
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (wa, da) = &detections[a];
        let (wb, db) = &detections[b];
        db.score
            .partial_cmp(&da.score)
            .unwrap()
            .then(wa.cmp(wb))
            .then(da.point_indices.iter().next().cmp(&db.point_indices.iter().next()))
    });

    let mut matched: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); windows.len()];
    let mut out = Vec::with_capacity(detections.len());
    let mut true_positives = 0usize;

    for idx in order {
        let (window, det) = &detections[idx];
        let gt = &windows[*window];

        // Ignore-region rule: strictly more than half the points.
        let on_ignore = det
            .point_indices
            .intersection(&gt.ignore_points)
            .count();
        if 2 * on_ignore > det.point_indices.len() {
            out.push(MatchedDetection {
                window: *window,
                class: det.class,
                score: det.score,
                flag: DetFlag::Ignored,
                points: det.point_indices.clone(),
            });
            continue;
        }

        let mut best: Option<(usize, f64)> = None;
        for (gi, inst) in gt.instances.iter().enumerate() {
            if inst.class != det.class || matched[*window].contains(&gi) {
                continue;
            }
            let iou = point_iou(&det.point_indices, &inst.points);
            if best.map(|(_, b)| iou > b).unwrap_or(true) {
                best = Some((gi, iou));
            }
        }
        let flag = match best {
            Some((gi, iou)) if iou > iou_threshold => {
                matched[*window].insert(gi);
                true_positives += 1;
                DetFlag::TruePositive
            }
            _ => DetFlag::FalsePositive,
        };
        out.push(MatchedDetection {
            window: *window,
            class: det.class,
            score: det.score,
            flag,
            points: det.point_indices.clone(),
        });
    }

    let total_gt: usize = gt_per_class.iter().sum();
    MatchResult {
        detections: out,
        gt_per_class,
        unmatched_gt: total_gt - true_positives,
    }
}

// ---------------------------------------------------------------------------
// Precision / recall and average precision
// ---------------------------------------------------------------------------

/// One operating point of a precision-recall curve. The score is the
/// threshold at which the point is reached (all detections scoring at least
/// this much are kept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve of one class; recall is non-decreasing along the
/// points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub n_gt: usize,
}

/// Build the curve from `(score, is_true_positive)` pairs; ignored
/// detections must already be filtered out.
pub fn pr_curve(scored_flags: &[(f64, bool)], n_gt: usize) -> Result<PrCurve> {
    if n_gt == 0 {
        return Err(Error::EmptyInput("PR curve needs at least one ground truth"));
    }
    let mut sorted: Vec<(f64, bool)> = scored_flags.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::with_capacity(sorted.len());
    for (score, is_tp) in sorted {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push(PrPoint {
            score,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / n_gt as f64,
        });
    }
    Ok(PrCurve {
        points,
        true_positives: tp,
        false_positives: fp,
        n_gt,
    })
}

/// Interpolation rule of the average-precision integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the precision envelope over all recall points.
    AllPoint,
    /// Mean of the envelope at recalls 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Area under the interpolated precision-recall curve.
pub fn average_precision(curve: &PrCurve, interpolation: Interpolation) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    // Precision envelope: for every point, the best precision at equal or
    // higher recall.
    let n = curve.points.len();
    let mut envelope = vec![0.0; n];
    let mut best: f64 = 0.0;
    for i in (0..n).rev() {
        best = best.max(curve.points[i].precision);
        envelope[i] = best;
    }
    match interpolation {
        Interpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, p) in curve.points.iter().enumerate() {
                ap += (p.recall - prev_recall) * envelope[i];
                prev_recall = p.recall;
            }
            ap
        }
        Interpolation::ElevenPoint => {
            let mut sum = 0.0;
            for level in 0..=10 {
                let r = level as f64 / 10.0;
                let p = curve
                    .points
                    .iter()
                    .zip(&envelope)
                    .find(|(pt, _)| pt.recall + 1e-12 >= r)
                    .map(|(_, &e)| e)
                    .unwrap_or(0.0);
                sum += p;
            }
            sum / 11.0
        }
    }
}

/// Score threshold with the best F1 along the curve; ties resolve to the
/// higher threshold.
pub fn best_f1_threshold(curve: &PrCurve) -> Result<(f64, f64)> {
    if curve.points.is_empty() {
        return Err(Error::NoDetections);
    }
    let mut best = (curve.points[0].score, -1.0);
    for p in &curve.points {
        let f1 = if p.precision + p.recall > 0.0 {
            2.0 * p.precision * p.recall / (p.precision + p.recall)
        } else {
            0.0
        };
        if f1 > best.1 {
            best = (p.score, f1);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Semantic F1
// ---------------------------------------------------------------------------

/// Per-class point-wise F1. `None` for classes without ground truth or
/// predictions; the macro average runs over defined foreground classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticF1 {
    pub per_class: Vec<Option<f64>>,
    pub macro_foreground: f64,
}

/// Point-wise F1 over predicted class indices; ignore targets are excluded.
pub fn f1_semantic(predictions: &[usize], targets: &[Target], num_classes: usize) -> SemanticF1 {
    assert_eq!(predictions.len(), targets.len());
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&pred, target) in predictions.iter().zip(targets) {
        let target = match target {
            Target::Class(c) => *c,
            Target::Ignore => continue,
        };
        if pred == target {
            tp[pred] += 1;
        } else {
            fp[pred] += 1;
            fn_[target] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                None
            } else {
                Some(2.0 * tp[c] as f64 / denom as f64)
            }
        })
        .collect();
    let fg: Vec<f64> = per_class.iter().skip(1).flatten().cloned().collect();
    let macro_foreground = if fg.is_empty() {
        0.0
    } else {
        fg.iter().sum::<f64>() / fg.len() as f64
    };
    SemanticF1 {
        per_class,
        macro_foreground,
    }
}

// ---------------------------------------------------------------------------
// False-positive attribution
// ---------------------------------------------------------------------------

/// What a false positive landed on, by majority of its points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FpCause {
    Background,
    IntraClass,
    Mp12,
    Mp22,
    Mp23,
    Omp,
}

impl FpCause {
    pub const ALL: [FpCause; 6] = [
        FpCause::Background,
        FpCause::IntraClass,
        FpCause::Mp12,
        FpCause::Mp22,
        FpCause::Mp23,
        FpCause::Omp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FpCause::Background => "BG",
            FpCause::IntraClass => "IntraCls",
            FpCause::Mp12 => "MP-12",
            FpCause::Mp22 => "MP-22",
            FpCause::Mp23 => "MP-23",
            FpCause::Omp => "OMP",
        }
    }
}

/// Attribution table: cause fractions over all false positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpAttribution {
    pub counts: BTreeMap<FpCause, usize>,
    pub fractions: BTreeMap<FpCause, f64>,
    pub total_false_positives: usize,
}

impl FpAttribution {
    /// Fraction of false positives caused by any multi-path label.
    pub fn ghost_share(&self) -> f64 {
        [FpCause::Mp12, FpCause::Mp22, FpCause::Mp23, FpCause::Omp]
            .iter()
            .map(|c| self.fractions.get(c).copied().unwrap_or(0.0))
            .sum()
    }
}

/// Attribute each false positive by the majority ground-truth label of its
/// points. Ties resolve toward the higher-priority ghost label (MP-12 >
/// MP-22 > MP-23 > OMP). Real-object majorities of another class count as
/// intra-class confusion; same-class real majorities (duplicate detections)
/// and clutter count as background.
pub fn fp_attribution(
    false_positives: &[&MatchedDetection],
    windows: &[WindowGt],
    cfg: &ClassConfig,
) -> Result<FpAttribution> {
    if false_positives.is_empty() {
        return Err(Error::NoFalsePositives);
    }

    // Tie priority: ghost labels first, then intra-class, then background.
    const PRIORITY: [FpCause; 6] = [
        FpCause::Mp12,
        FpCause::Mp22,
        FpCause::Mp23,
        FpCause::Omp,
        FpCause::IntraClass,
        FpCause::Background,
    ];

    let mut counts: BTreeMap<FpCause, usize> = BTreeMap::new();
    for det in false_positives {
        debug_assert_eq!(det.flag, DetFlag::FalsePositive);
        let annotations = &windows[det.window].annotations;
        let mut tally: BTreeMap<FpCause, usize> = BTreeMap::new();
        for origin in &det.points {
            let ann = match annotations.get(origin) {
                Some(a) => a,
                None => continue,
            };
            if ann.sketchy || ann.label == Label::Ignore {
                continue;
            }
            let cause = match ann.label {
                Label::Background => FpCause::Background,
                Label::Mp12 => FpCause::Mp12,
                Label::Mp22 => FpCause::Mp22,
                Label::Mp23 => FpCause::Mp23,
                Label::Omp | Label::Indistinguishable => FpCause::Omp,
                Label::Real => {
                    if map_labels(ann, cfg) == Target::Class(det.class) {
                        // A duplicate or fragmented detection of a real
                        // object of the predicted class.
                        FpCause::Background
                    } else {
                        FpCause::IntraClass
                    }
                }
                Label::Ignore => unreachable!(),
            };
            *tally.entry(cause).or_insert(0) += 1;
        }
        // First maximum in priority order wins ties.
        let mut chosen = FpCause::Background;
        let mut chosen_count = 0usize;
        for cause in PRIORITY {
            let c = tally.get(&cause).copied().unwrap_or(0);
            if c > chosen_count {
                chosen = cause;
                chosen_count = c;
            }
        }
        *counts.entry(chosen).or_insert(0) += 1;
    }

    let total: usize = counts.values().sum();
    let fractions = counts
        .iter()
        .map(|(&cause, &count)| (cause, count as f64 / total as f64))
        .collect();
    Ok(FpAttribution {
        counts,
        fractions,
        total_false_positives: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Granularity, LabelSet};
    use crate::types::ObjectClass;

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().cloned().collect()
    }

    #[test]
    fn test_point_iou_cases() {
        assert_eq!(point_iou(&set(&[1, 2, 3]), &set(&[2, 3, 4])), 0.5);
        assert_eq!(point_iou(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        assert_eq!(point_iou(&set(&[1]), &set(&[2])), 0.0);
        assert_eq!(point_iou(&set(&[]), &set(&[])), 0.0);
    }

    fn gt_window(instances: Vec<(u32, usize, Vec<usize>)>) -> WindowGt {
        WindowGt {
            instances: instances
                .into_iter()
                .map(|(instance_id, class, pts)| GtInstance {
                    instance_id,
                    class,
                    points: pts.into_iter().collect(),
                })
                .collect(),
            ignore_points: BTreeSet::new(),
            annotations: BTreeMap::new(),
        }
    }

    fn det(points: Vec<usize>, class: usize, score: f64) -> Detection {
        Detection {
            point_indices: points.into_iter().collect(),
            class,
            score,
        }
    }

    #[test]
    fn test_match_thresholds() {
        // GT of 10 points; detection overlaps 6 => IoU 0.6.
        let gt = gt_window(vec![(1, 1, (0..10).collect())]);
        let d = det((0..6).chain(20..24).collect(), 1, 0.9);
        // IoU = 6 / 14 ≈ 0.43: TP at 0.3, FP at 0.5.
        let r03 = match_detections(&[(0, d.clone())], &[gt.clone()], 2, 0.3);
        assert_eq!(r03.detections[0].flag, DetFlag::TruePositive);
        let r05 = match_detections(&[(0, d)], &[gt.clone()], 2, 0.5);
        assert_eq!(r05.detections[0].flag, DetFlag::FalsePositive);

        // Full-overlap detection: TP at both.
        let d = det((0..10).collect(), 1, 0.9);
        for threshold in [0.3, 0.5] {
            let r = match_detections(&[(0, d.clone())], &[gt.clone()], 2, threshold);
            assert_eq!(r.detections[0].flag, DetFlag::TruePositive);
        }
    }

    #[test]
    fn test_match_each_gt_only_once() {
        let gt = gt_window(vec![(1, 1, (0..10).collect())]);
        let d1 = det((0..10).collect(), 1, 0.9);
        let d2 = det((0..9).collect(), 1, 0.8);
        let r = match_detections(&[(0, d1), (0, d2)], &[gt], 2, 0.3);
        assert_eq!(r.detections[0].flag, DetFlag::TruePositive);
        assert_eq!(r.detections[0].score, 0.9);
        assert_eq!(r.detections[1].flag, DetFlag::FalsePositive);
        assert!(r.detections[0].score >= r.detections[1].score);
    }

    #[test]
    fn test_match_class_aware_and_ignore_majority() {
        let mut gt = gt_window(vec![(1, 1, vec![0, 1, 2, 3])]);
        gt.ignore_points = set(&[10, 11, 12]);
        // Wrong class never matches.
        let d_wrong = det(vec![0, 1, 2, 3], 2, 0.9);
        // Majority of points on the ignore region: dropped.
        let d_ignore = det(vec![10, 11, 12, 0, 1], 1, 0.8);
        let r = match_detections(&[(0, d_wrong), (0, d_ignore)], &[gt], 3, 0.3);
        assert_eq!(r.detections[0].flag, DetFlag::FalsePositive);
        assert_eq!(r.detections[1].flag, DetFlag::Ignored);
    }

    #[test]
    fn test_ap_hand_computed_cases() {
        // Single true positive on one ground truth.
        let curve = pr_curve(&[(0.9, true)], 1).unwrap();
        assert_eq!(average_precision(&curve, Interpolation::AllPoint), 1.0);

        // TP at 0.9 then FP at 0.8: the FP comes after full recall.
        let curve = pr_curve(&[(0.9, true), (0.8, false)], 1).unwrap();
        assert_eq!(average_precision(&curve, Interpolation::AllPoint), 1.0);

        // FP first: precision at full recall is 0.5.
        let curve = pr_curve(&[(0.9, false), (0.8, true)], 1).unwrap();
        assert_eq!(average_precision(&curve, Interpolation::AllPoint), 0.5);
    }

    #[test]
    fn test_ap_monotone_score_invariance() {
        let flags = [
            (0.9, true),
            (0.7, false),
            (0.6, true),
            (0.4, false),
            (0.2, true),
        ];
        let transformed: Vec<(f64, bool)> = flags
            .iter()
            .map(|&(s, t)| (s * s * 10.0 + 1.0, t))
            .collect();
        let a = average_precision(&pr_curve(&flags, 4).unwrap(), Interpolation::AllPoint);
        let b = average_precision(&pr_curve(&transformed, 4).unwrap(), Interpolation::AllPoint);
        assert!((a - b).abs() < 1e-15);
    }

    /// Exhaustive-threshold oracle: trapezoid-free area computed from the
    /// envelope at every distinct recall level.
    fn ap_oracle(flags: &[(f64, bool)], n_gt: usize) -> f64 {
        let mut thresholds: Vec<f64> = flags.iter().map(|f| f.0).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        // (recall, precision) at every threshold.
        let mut ops: Vec<(f64, f64)> = Vec::new();
        for &t in &thresholds {
            let kept: Vec<&(f64, bool)> = flags.iter().filter(|f| f.0 >= t).collect();
            let tp = kept.iter().filter(|f| f.1).count();
            let fp = kept.len() - tp;
            if kept.is_empty() {
                continue;
            }
            ops.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
        }
        ops.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for (i, &(r, _)) in ops.iter().enumerate() {
            let envelope = ops[i..]
                .iter()
                .map(|&(_, p)| p)
                .fold(0.0f64, f64::max);
            ap += (r - prev_r) * envelope;
            prev_r = r;
        }
        ap
    }

    #[test]
    fn test_ap_matches_exhaustive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let n = rng.gen_range(1..20);
            let n_gt = rng.gen_range(1..10);
            let mut tps = 0;
            let flags: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let tp = rng.gen_bool(0.5) && tps < n_gt;
                    if tp {
                        tps += 1;
                    }
                    (rng.gen_range(0.0..1.0), tp)
                })
                .collect();
            let ours = average_precision(&pr_curve(&flags, n_gt).unwrap(), Interpolation::AllPoint);
            let oracle = ap_oracle(&flags, n_gt);
            assert!(
                (ours - oracle).abs() < 1e-12,
                "ours {ours} oracle {oracle} flags {flags:?}"
            );
        }
    }

    #[test]
    fn test_recall_monotone_along_curve() {
        let flags = [(0.9, true), (0.8, false), (0.5, true), (0.3, true)];
        let curve = pr_curve(&flags, 5).unwrap();
        for pair in curve.points.windows(2) {
            assert!(pair[1].recall >= pair[0].recall);
        }
    }

    #[test]
    fn test_best_f1_threshold() {
        let curve = pr_curve(&[(0.9, true)], 1).unwrap();
        let (threshold, f1) = best_f1_threshold(&curve).unwrap();
        assert_eq!(threshold, 0.9);
        assert_eq!(f1, 1.0);

        // Exhaustive scan oracle.
        let flags = [
            (0.9, true),
            (0.8, false),
            (0.7, true),
            (0.6, false),
            (0.5, false),
        ];
        let curve = pr_curve(&flags, 3).unwrap();
        let (threshold, best) = best_f1_threshold(&curve).unwrap();
        let mut oracle_best = -1.0f64;
        let mut oracle_threshold = 0.0;
        for &(t, _) in &flags {
            let kept: Vec<_> = flags.iter().filter(|f| f.0 >= t).collect();
            let tp = kept.iter().filter(|f| f.1).count() as f64;
            let precision = tp / kept.len() as f64;
            let recall = tp / 3.0;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            if f1 > oracle_best {
                oracle_best = f1;
                oracle_threshold = t;
            }
        }
        assert!((best - oracle_best).abs() < 1e-12);
        assert_eq!(threshold, oracle_threshold);
    }

    #[test]
    fn test_best_f1_threshold_empty_is_error() {
        let curve = PrCurve {
            points: vec![],
            true_positives: 0,
            false_positives: 0,
            n_gt: 1,
        };
        assert!(best_f1_threshold(&curve).is_err());
    }

    #[test]
    fn test_f1_semantic_perfect_and_all_background() {
        let targets = vec![
            Target::Class(0),
            Target::Class(1),
            Target::Class(1),
            Target::Class(2),
            Target::Ignore,
        ];
        let perfect = vec![0, 1, 1, 2, 0];
        let r = f1_semantic(&perfect, &targets, 3);
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!(r.macro_foreground, 1.0);

        let all_bg = vec![0, 0, 0, 0, 0];
        let r = f1_semantic(&all_bg, &targets, 3);
        assert_eq!(r.per_class[1], Some(0.0));
        assert_eq!(r.per_class[2], Some(0.0));
        assert_eq!(r.macro_foreground, 0.0);
    }

    #[test]
    fn test_f1_semantic_matches_confusion_matrix_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let n = 200;
        let targets: Vec<Target> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Target::Ignore
                } else {
                    Target::Class(rng.gen_range(0..3))
                }
            })
            .collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let r = f1_semantic(&preds, &targets, 3);

        for c in 0..3 {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for (&p, t) in preds.iter().zip(&targets) {
                let t = match t {
                    Target::Class(t) => *t,
                    Target::Ignore => continue,
                };
                if p == c && t == c {
                    tp += 1.0;
                } else if p == c {
                    fp += 1.0;
                } else if t == c {
                    fn_ += 1.0;
                }
            }
            let expected = 2.0 * tp / (2.0 * tp + fp + fn_);
            assert!((r.per_class[c].unwrap() - expected).abs() < 1e-12);
        }
    }

    fn ann(label: Label, class: ObjectClass, instance: u32) -> Annotation {
        Annotation {
            instance_id: instance,
            label,
            object_class: class,
            surface_id: label.is_specific_multipath().then_some(1),
            sketchy: false,
        }
    }

    #[test]
    fn test_fp_attribution_majority_and_sum() {
        let cfg = ClassConfig {
            granularity: Granularity::Merged,
            labelset: LabelSet::RealOnly,
        };
        let mut annotations = BTreeMap::new();
        // Points 0..4 on an MP-12 ghost, 4 on clutter.
        for i in 0..4 {
            annotations.insert(i, ann(Label::Mp12, ObjectClass::Pedestrian, 5));
        }
        annotations.insert(4, ann(Label::Background, ObjectClass::None, 0));
        // Points 10..13 clutter.
        for i in 10..13 {
            annotations.insert(i, ann(Label::Background, ObjectClass::None, 0));
        }
        let window = WindowGt {
            instances: vec![],
            ignore_points: BTreeSet::new(),
            annotations,
        };

        let fps = vec![
            MatchedDetection {
                window: 0,
                class: 1,
                score: 0.9,
                flag: DetFlag::FalsePositive,
                points: set(&[0, 1, 2, 3, 4]),
            },
            MatchedDetection {
                window: 0,
                class: 1,
                score: 0.7,
                flag: DetFlag::FalsePositive,
                points: set(&[10, 11, 12]),
            },
        ];
        let refs: Vec<&MatchedDetection> = fps.iter().collect();
        let attribution = fp_attribution(&refs, &[window], &cfg).unwrap();
        assert_eq!(attribution.counts[&FpCause::Mp12], 1);
        assert_eq!(attribution.counts[&FpCause::Background], 1);
        let sum: f64 = attribution.fractions.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((attribution.ghost_share() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn test_fp_attribution_intra_class() {
        let cfg = ClassConfig {
            granularity: Granularity::PedCycl,
            labelset: LabelSet::RealOnly,
        };
        let mut annotations = BTreeMap::new();
        for i in 0..5 {
            annotations.insert(i, ann(Label::Real, ObjectClass::Cyclist, 2));
        }
        let window = WindowGt {
            instances: vec![],
            ignore_points: BTreeSet::new(),
            annotations,
        };
        // Detection claims pedestrian (class 1) but sits on a real cyclist.
        let fp = MatchedDetection {
            window: 0,
            class: 1,
            score: 0.9,
            flag: DetFlag::FalsePositive,
            points: set(&[0, 1, 2, 3, 4]),
        };
        let attribution = fp_attribution(&[&fp], &[window], &cfg).unwrap();
        assert_eq!(attribution.counts[&FpCause::IntraClass], 1);
    }

    #[test]
    fn test_fp_attribution_no_fps_is_flagged() {
        let cfg = ClassConfig {
            granularity: Granularity::Merged,
            labelset: LabelSet::RealOnly,
        };
        assert!(matches!(
            fp_attribution(&[], &[], &cfg),
            Err(Error::NoFalsePositives)
        ));
    }

    #[test]
    fn test_window_ground_truth_small_instances_become_ignore() {
        use crate::preprocess::CloudPoint;
        let cfg = ClassConfig {
            granularity: Granularity::Merged,
            labelset: LabelSet::GhostMerged,
        };
        let mk = |origin: usize, label: Label, instance: u32| CloudPoint {
            x: 0.0,
            y: 0.0,
            amplitude: 0.0,
            doppler: 0.0,
            rel_timestamp: 0.0,
            cycle_age: 0,
            origin_index: origin,
            annotation: ann(label, ObjectClass::Pedestrian, instance),
        };
        let cloud = FixedCloud {
            points: vec![
                mk(0, Label::Real, 1),
                mk(1, Label::Real, 1),
                mk(2, Label::Real, 1),
                mk(2, Label::Real, 1), // duplicate origin
                mk(3, Label::Mp12, 2),
                mk(4, Label::Mp12, 2), // only two points: too small
            ],
        };
        let gt = window_ground_truth(&cloud, &cfg);
        assert_eq!(gt.instances.len(), 1);
        assert_eq!(gt.instances[0].points, set(&[0, 1, 2]));
        assert_eq!(gt.ignore_points, set(&[3, 4]));
    }
}
