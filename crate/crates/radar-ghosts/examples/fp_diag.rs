//! Scratch diagnostic: what do the similarity route's obj false positives
//! land on?

use radar_ghosts::experiment::{
    corridor_benchmark, detect_sequences, generate_dataset, train_model, DetectorKind,
};
use radar_ghosts::types::{Label, Split};

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(400);
    let mut cfg = corridor_benchmark(7);
    cfg.train.steps = steps;
    let store = generate_dataset(&cfg).expect("dataset");
    let (ckpt, _) = train_model(&cfg, &store, 1).expect("train");
    let dets = detect_sequences(
        &ckpt,
        store.split(Split::Test),
        DetectorKind::Sgpn,
        cfg.nms_iou,
        &cfg.dbscan,
    )
    .expect("detect");

    // Rebuild window ground truths and classify each detection by hand.
    use radar_ghosts::eval::{match_detections, window_ground_truth, DetFlag};
    use radar_ghosts::preprocess::{build_cloud, windows};
    use std::collections::BTreeMap;

    let mut index: BTreeMap<(String, usize), usize> = BTreeMap::new();
    let mut gts = Vec::new();
    let mut clouds = Vec::new();
    for (name, seq) in store.split(Split::Test) {
        for (w, window) in windows(seq, 3, ckpt.preprocess.eval_stride).into_iter().enumerate() {
            let cloud = build_cloud(window, ckpt.preprocess.cloud_size).unwrap();
            index.insert((name.clone(), w * ckpt.preprocess.eval_stride), gts.len());
            gts.push(window_ground_truth(&cloud, &ckpt.class_config));
            clouds.push(cloud);
        }
    }
    let flat: Vec<(usize, radar_ghosts::detect::Detection)> = dets
        .records
        .iter()
        .map(|(k, d)| (index[&(k.sequence.clone(), k.start)], d.clone()))
        .collect();
    let result = match_detections(&flat, &gts, 3, 0.3);

    for class in [1usize, 2] {
        let mut by_label: BTreeMap<String, usize> = BTreeMap::new();
        let mut fp_scores = Vec::new();
        let mut tp_scores = Vec::new();
        let mut fp_sizes = Vec::new();
        for d in result.detections.iter().filter(|d| d.class == class) {
            match d.flag {
                DetFlag::TruePositive => tp_scores.push(d.score),
                DetFlag::Ignored => {}
                DetFlag::FalsePositive => {
                    fp_scores.push(d.score);
                    fp_sizes.push(d.points.len());
                    // Majority label of the FP's points.
                    let ann = &gts[d.window].annotations;
                    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
                    for p in &d.points {
                        if let Some(a) = ann.get(p) {
                            let name = if a.label == Label::Real {
                                format!("REAL-i{}", a.instance_id)
                            } else {
                                a.label.to_string()
                            };
                            *tally.entry(name).or_insert(0) += 1;
                        }
                    }
                    let major = tally
                        .iter()
                        .max_by_key(|(_, &c)| c)
                        .map(|(l, _)| l.clone())
                        .unwrap_or_default();
                    let major = if major.starts_with("REAL") { "REAL".to_string() } else { major };
                    *by_label.entry(major).or_insert(0) += 1;
                }
            }
        }
        fp_scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        tp_scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        println!(
            "class {class}: {} TP (top {:.2}, median {:.2}), {} FP",
            tp_scores.len(),
            tp_scores.first().unwrap_or(&0.0),
            tp_scores.get(tp_scores.len() / 2).unwrap_or(&0.0),
            fp_scores.len()
        );
        println!(
            "  FP score top10: {:?}",
            &fp_scores.iter().take(10).map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        println!(
            "  FP sizes top10: {:?}",
            &fp_sizes.iter().take(10).collect::<Vec<_>>()
        );
        println!("  FP majority labels: {by_label:?}");
        let n_gt = result.gt_per_class[class];
        println!("  n_gt {n_gt}");
    }
}
