//! Scratch micro-benchmark of one training step's phases.

use std::time::Instant;

use radar_ghosts::experiment::{corridor_benchmark, generate_dataset, split_clouds};
use radar_ghosts::nnet::{
    class_weights_from_dataset, loss_term_with_gradients, LossTerm, LossWeights, ModelParams,
    TrainCloud, TrainConfig,
};
use radar_ghosts::types::Split;

fn main() {
    let mut cfg = corridor_benchmark(7);
    cfg.overlays.train_count = 2;
    let store = generate_dataset(&cfg).expect("dataset");

    let t = Instant::now();
    let clouds = split_clouds(&store, Split::Train, &cfg.preprocess, cfg.preprocess.train_stride);
    println!("{} clouds built in {:.2}s", clouds.len(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let prepared: Vec<TrainCloud> = clouds
        .iter()
        .take(8)
        .map(|c| TrainCloud::prepare(c, &cfg.class_config, None, cfg.k_neighbors).unwrap())
        .collect();
    println!(
        "prepare (knn) 8 clouds sequential: {:.3}s/cloud",
        t.elapsed().as_secs_f64() / 8.0
    );

    let class_weights = class_weights_from_dataset(clouds.iter().take(20), &cfg.class_config).unwrap();
    let weights = LossWeights {
        class_weights,
        ..LossWeights::uniform(cfg.class_config.num_classes())
    };
    let params = ModelParams::init(cfg.model_config(), 1);
    let cloud = &prepared[0];

    let t = Instant::now();
    for _ in 0..5 {
        let _ = params
            .forward_with_knn(&cloud.features, &cloud.knn)
            .unwrap();
    }
    println!("forward: {:.3}s", t.elapsed().as_secs_f64() / 5.0);

    for (term, sub) in [
        (LossTerm::Semantic, None),
        (LossTerm::Similarity, Some(1024)),
        (LossTerm::Confidence, Some(1024)),
    ] {
        let indices: Option<Vec<usize>> = sub.map(|m| (0..m).collect());
        let t = Instant::now();
        for _ in 0..5 {
            let _ = loss_term_with_gradients(
                &params,
                cloud,
                &weights,
                term,
                indices.as_deref(),
                None,
            )
            .unwrap();
        }
        println!("{term:?} loss+grads: {:.3}s", t.elapsed().as_secs_f64() / 5.0);
    }

    let mut p2 = params.clone();
    let train_cfg = TrainConfig {
        steps: 5,
        ..cfg.train.clone()
    };
    let t = Instant::now();
    radar_ghosts::nnet::train(&mut p2, &prepared, &weights, &train_cfg).unwrap();
    println!("full step: {:.3}s", t.elapsed().as_secs_f64() / 5.0);
}
