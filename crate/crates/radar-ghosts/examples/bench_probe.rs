//! Scratch probe for the corridor benchmark: timings and achieved AP.

use std::time::Instant;

use radar_ghosts::experiment::{
    corridor_benchmark, detect_sequences, evaluate_detections, generate_dataset, train_model,
    DetectorKind,
};
use radar_ghosts::types::Split;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let mut cfg = corridor_benchmark(7);
    cfg.train.steps = steps;

    let t0 = Instant::now();
    let store = generate_dataset(&cfg).expect("dataset");
    println!(
        "dataset: {:.1}s ({} train, {} val, {} test)",
        t0.elapsed().as_secs_f64(),
        store.split(Split::Train).len(),
        store.split(Split::Val).len(),
        store.split(Split::Test).len()
    );
    for (name, seq) in store.split(Split::Train).iter().take(2) {
        println!(
            "  {name}: {} frames, mean {:.0} pts/frame",
            seq.frames.len(),
            seq.mean_points_per_frame()
        );
    }

    let t1 = Instant::now();
    let (ckpt, curve) = train_model(&cfg, &store, seed).expect("train");
    println!(
        "train {} steps: {:.1}s ({:.3}s/step)",
        steps,
        t1.elapsed().as_secs_f64(),
        t1.elapsed().as_secs_f64() / steps as f64
    );
    for r in curve.iter().step_by((steps / 10).max(1)) {
        println!(
            "  step {:>4}: sem {:.4} sim {:.4} conf {:.4}",
            r.step, r.semantic, r.similarity, r.confidence
        );
    }

    for kind in [DetectorKind::Sgpn, DetectorKind::Dbscan] {
        let t2 = Instant::now();
        let dets = detect_sequences(&ckpt, store.split(Split::Test), kind, cfg.nms_iou, &cfg.dbscan)
            .expect("detect");
        let report = evaluate_detections(
            &dets,
            store.split(Split::Test),
            &cfg.class_config,
            &cfg.iou_thresholds,
            cfg.interpolation,
            None,
        )
        .expect("evaluate");
        println!(
            "{kind}: {:.1}s, {} detections",
            t2.elapsed().as_secs_f64(),
            dets.records.len()
        );
        for iou in &report.per_iou {
            let aps: Vec<String> = iou
                .per_class
                .iter()
                .map(|c| {
                    format!(
                        "{}={} (gt {}, det {})",
                        c.class,
                        c.ap.map(|a| format!("{a:.3}")).unwrap_or("n/a".into()),
                        c.n_gt,
                        c.n_detections
                    )
                })
                .collect();
            println!("  iou {:.1}: {}", iou.iou, aps.join("  "));
        }
    }
}
