//! Per-point network with three heads (class logits, embedding, confidence)
//! and its hand-rolled gradients.
//!
//! The featurizer is two neighborhood blocks — a per-point affine+tanh layer
//! of width `hidden`, mean-aggregated over the k nearest neighbors in (x, y)
//! and concatenated with the block input — followed by a two-layer affine
//! trunk. Heads produce `N x (C+1)` class logits, an `N x E` embedding and an
//! `N x 1` confidence squashed to [0, 1].
//!
//! Everything is f64 and deterministic; gradients are exact and verified
//! against central finite differences in the test suite.

mod loss;
mod model;
mod train;

pub use loss::{
    class_weight_from_shares, class_weights_from_dataset, confidence_loss, confidence_targets,
    semantic_loss, similarity_loss, similarity_matrix, similarity_matrix_backward, LossWeights,
    PairLossTally, PointRole,
};
pub use model::{
    knn_indices, Dense, ForwardCache, ForwardOutput, ModelConfig, ModelParams,
};
pub use train::{
    loss_term_value, loss_term_with_gradients, train, Checkpoint, LossRecord, LossTerm,
    TrainCloud, TrainConfig,
};
