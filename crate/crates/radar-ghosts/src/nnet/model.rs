//! Network parameters, forward pass and backpropagation.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::NUM_FEATURES;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the featurizer and trunk layers.
    pub hidden: usize,
    /// Embedding dimension of the similarity head.
    pub embed_dim: usize,
    /// Neighborhood size of the aggregation blocks.
    pub k_neighbors: usize,
    /// Number of classes including background.
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 16,
            k_neighbors: 16,
            num_classes: 3,
        }
    }
}

/// One affine layer: `y = x . w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let scale = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.gen_range(-scale..scale));
        Self {
            w,
            b: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulate parameter gradients and return the input gradient.
    fn backward(
        &self,
        x: &Array2<f64>,
        d_out: &Array2<f64>,
        grad: &mut Dense,
    ) -> Array2<f64> {
        grad.w += &x.t().dot(d_out);
        grad.b += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.w.t())
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// All trainable weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub block1: Dense,
    pub block2: Dense,
    pub trunk1: Dense,
    pub trunk2: Dense,
    pub head_class: Dense,
    pub head_embed: Dense,
    pub head_conf: Dense,
}

impl ModelParams {
    fn shapes(config: &ModelConfig) -> [(usize, usize); 7] {
        let h = config.hidden;
        [
            (NUM_FEATURES, h),
            (h + NUM_FEATURES, h),
            (2 * h + NUM_FEATURES, h),
            (h, h),
            (h, config.num_classes),
            (h, config.embed_dim),
            (h, 1),
        ]
    }

    /// All-zero parameters (logits 0, confidence 0.5 by construction).
    pub fn zeros(config: ModelConfig) -> Self {
        let s = Self::shapes(&config);
        Self {
            config,
            block1: Dense::zeros(s[0].0, s[0].1),
            block2: Dense::zeros(s[1].0, s[1].1),
            trunk1: Dense::zeros(s[2].0, s[2].1),
            trunk2: Dense::zeros(s[3].0, s[3].1),
            head_class: Dense::zeros(s[4].0, s[4].1),
            head_embed: Dense::zeros(s[5].0, s[5].1),
            head_conf: Dense::zeros(s[6].0, s[6].1),
        }
    }

    /// Uniform Glorot initialization, deterministic in the seed.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Self::shapes(&config);
        Self {
            config,
            block1: Dense::init(s[0].0, s[0].1, &mut rng),
            block2: Dense::init(s[1].0, s[1].1, &mut rng),
            trunk1: Dense::init(s[2].0, s[2].1, &mut rng),
            trunk2: Dense::init(s[3].0, s[3].1, &mut rng),
            head_class: Dense::init(s[4].0, s[4].1, &mut rng),
            head_embed: Dense::init(s[5].0, s[5].1, &mut rng),
            head_conf: Dense::init(s[6].0, s[6].1, &mut rng),
        }
    }

    fn layers(&self) -> [&Dense; 7] {
        [
            &self.block1,
            &self.block2,
            &self.trunk1,
            &self.trunk2,
            &self.head_class,
            &self.head_embed,
            &self.head_conf,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 7] {
        [
            &mut self.block1,
            &mut self.block2,
            &mut self.trunk1,
            &mut self.trunk2,
            &mut self.head_class,
            &mut self.head_embed,
            &mut self.head_conf,
        ]
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    /// Flatten all parameters into one vector (weights row-major, then bias,
    /// layer by layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in self.layers_mut() {
            for v in layer.w.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
            for v in layer.b.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

// ---------------------------------------------------------------------------
// k nearest neighbors
// ---------------------------------------------------------------------------

/// Index matrix of the k nearest neighbors (including the point itself) in
/// (x, y); ties broken by index for determinism.
pub fn knn_indices(coords: &Array2<f64>, k: usize) -> Result<Array2<usize>> {
    let n = coords.nrows();
    if k == 0 || n < k {
        return Err(Error::InvalidModelInput(format!(
            "need at least k = {k} points, got {n}"
        )));
    }
    let mut knn = Array2::zeros((n, k));
    let xs: Vec<f64> = coords.column(0).to_vec();
    let ys: Vec<f64> = coords.column(1).to_vec();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        for j in 0..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            dist.push((dx * dx + dy * dy, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
        };
        dist.select_nth_unstable_by(k - 1, cmp);
        let head = &mut dist[..k];
        head.sort_by(cmp);
        for (slot, &(_, j)) in head.iter().enumerate() {
            knn[[i, slot]] = j;
        }
    }
    Ok(knn)
}

fn knn_mean(values: &Array2<f64>, knn: &Array2<usize>) -> Array2<f64> {
    let (n, k) = (knn.nrows(), knn.ncols());
    let d = values.ncols();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for slot in 0..k {
            let j = knn[[i, slot]];
            let row = values.row(j);
            let mut acc = out.row_mut(i);
            acc += &row;
        }
    }
    out / k as f64
}

fn knn_mean_backward(d_out: &Array2<f64>, knn: &Array2<usize>, n_points: usize) -> Array2<f64> {
    let k = knn.ncols();
    let mut d_values = Array2::zeros((n_points, d_out.ncols()));
    let scale = 1.0 / k as f64;
    for i in 0..knn.nrows() {
        let g = d_out.row(i);
        for slot in 0..k {
            let j = knn[[i, slot]];
            let mut row = d_values.row_mut(j);
            row.scaled_add(scale, &g);
        }
    }
    d_values
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Head outputs for one cloud.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// N x (C+1) class logits.
    pub logits: Array2<f64>,
    /// N x E embeddings.
    pub embeddings: Array2<f64>,
    /// Per-point confidence in [0, 1].
    pub confidence: Array1<f64>,
}

/// Intermediate activations needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    knn: Array2<usize>,
    x0: Array2<f64>,
    a1: Array2<f64>,
    z1: Array2<f64>,
    a2: Array2<f64>,
    z2: Array2<f64>,
    t1: Array2<f64>,
    t2: Array2<f64>,
    confidence: Array1<f64>,
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

impl ModelParams {
    /// Run the network on a cloud, computing neighborhoods from `coords`.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        coords: &Array2<f64>,
    ) -> Result<(ForwardOutput, ForwardCache)> {
        let knn = knn_indices(coords, self.config.k_neighbors)?;
        self.forward_with_knn(features, &knn)
    }

    /// Run the network with a precomputed neighbor index (training caches
    /// the indices per cloud).
    pub fn forward_with_knn(
        &self,
        features: &Array2<f64>,
        knn: &Array2<usize>,
    ) -> Result<(ForwardOutput, ForwardCache)> {
        if features.ncols() != NUM_FEATURES {
            return Err(Error::InvalidModelInput(format!(
                "expected {NUM_FEATURES} features, got {}",
                features.ncols()
            )));
        }
        if features.nrows() != knn.nrows() {
            return Err(Error::InvalidModelInput(
                "feature and neighbor row counts differ".into(),
            ));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModelInput("non-finite features".into()));
        }

        let x0 = features.clone();
        let a1 = self.block1.forward(&x0).mapv(f64::tanh);
        let g1 = knn_mean(&a1, knn);
        let z1 = hstack(&g1, &x0);
        let a2 = self.block2.forward(&z1).mapv(f64::tanh);
        let g2 = knn_mean(&a2, knn);
        let z2 = hstack(&g2, &z1);
        let t1 = self.trunk1.forward(&z2).mapv(f64::tanh);
        let t2 = self.trunk2.forward(&t1).mapv(f64::tanh);

        let logits = self.head_class.forward(&t2);
        let embeddings = self.head_embed.forward(&t2);
        let conf_pre = self.head_conf.forward(&t2);
        let confidence = conf_pre.column(0).mapv(|v| 1.0 / (1.0 + (-v).exp()));

        let output = ForwardOutput {
            logits,
            embeddings,
            confidence: confidence.clone(),
        };
        let cache = ForwardCache {
            knn: knn.clone(),
            x0,
            a1,
            z1,
            a2,
            z2,
            t1,
            t2,
            confidence,
        };
        Ok((output, cache))
    }

    /// Backpropagate head gradients to a parameter gradient of the same
    /// shape as `self`. `d_confidence` is the gradient with respect to the
    /// post-sigmoid confidence.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: &Array2<f64>,
        d_embeddings: &Array2<f64>,
        d_confidence: &Array1<f64>,
    ) -> ModelParams {
        let mut grad = ModelParams::zeros(self.config);
        let n = cache.x0.nrows();
        let h = self.config.hidden;

        // Heads.
        let mut d_t2 = self
            .head_class
            .backward(&cache.t2, d_logits, &mut grad.head_class);
        d_t2 += &self
            .head_embed
            .backward(&cache.t2, d_embeddings, &mut grad.head_embed);
        let d_conf_pre = (d_confidence * &cache.confidence
            * cache.confidence.mapv(|c| 1.0 - c))
        .insert_axis(Axis(1));
        d_t2 += &self
            .head_conf
            .backward(&cache.t2, &d_conf_pre, &mut grad.head_conf);

        // Trunk.
        let d_t2_pre = d_t2 * cache.t2.mapv(|v| 1.0 - v * v);
        let d_t1 = self.trunk2.backward(&cache.t1, &d_t2_pre, &mut grad.trunk2);
        let d_t1_pre = d_t1 * cache.t1.mapv(|v| 1.0 - v * v);
        let d_z2 = self.trunk1.backward(&cache.z2, &d_t1_pre, &mut grad.trunk1);

        // Block 2: z2 = [g2 | z1].
        let d_g2 = d_z2.slice(s![.., ..h]).to_owned();
        let mut d_z1 = d_z2.slice(s![.., h..]).to_owned();
        let d_a2 = knn_mean_backward(&d_g2, &cache.knn, n) * cache.a2.mapv(|v| 1.0 - v * v);
        d_z1 += &self.block2.backward(&cache.z1, &d_a2, &mut grad.block2);

        // Block 1: z1 = [g1 | x0]; the x0 part has no parameters upstream.
        let d_g1 = d_z1.slice(s![.., ..h]).to_owned();
        let d_a1 = knn_mean_backward(&d_g1, &cache.knn, n) * cache.a1.mapv(|v| 1.0 - v * v);
        self.block1.backward(&cache.x0, &d_a1, &mut grad.block1);

        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_cloud(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, NUM_FEATURES), |_| rng.gen_range(-1.0..1.0));
        let mut coords = Array2::zeros((n, 2));
        for i in 0..n {
            coords[[i, 0]] = features[[i, 0]];
            coords[[i, 1]] = features[[i, 1]];
        }
        (features, coords)
    }

    #[test]
    fn test_knn_includes_self_and_sorts_by_distance() {
        let coords = array![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [0.1, 0.0]];
        let knn = knn_indices(&coords, 2).unwrap();
        assert_eq!(knn.row(0).to_vec(), vec![0, 3]);
        assert_eq!(knn.row(2).to_vec(), vec![2, 1]);
    }

    #[test]
    fn test_knn_whole_cloud_when_n_equals_k() {
        let (_, coords) = random_cloud(16, 1);
        let knn = knn_indices(&coords, 16).unwrap();
        for i in 0..16 {
            let mut row = knn.row(i).to_vec();
            row.sort_unstable();
            assert_eq!(row, (0..16).collect::<Vec<_>>());
        }
    }

    #[test]
    fn test_knn_rejects_small_cloud() {
        let (_, coords) = random_cloud(3, 1);
        assert!(knn_indices(&coords, 4).is_err());
    }

    #[test]
    fn test_zero_weights_forced_outputs() {
        let config = ModelConfig {
            hidden: 8,
            embed_dim: 4,
            k_neighbors: 4,
            num_classes: 3,
        };
        let params = ModelParams::zeros(config);
        let (features, coords) = random_cloud(10, 2);
        let (out, _) = params.forward(&features, &coords).unwrap();
        assert!(out.logits.iter().all(|&v| v == 0.0));
        assert!(out.confidence.iter().all(|&v| v == 0.5));
        assert!(out.embeddings.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn test_forward_shapes() {
        let config = ModelConfig {
            hidden: 8,
            embed_dim: 4,
            k_neighbors: 4,
            num_classes: 5,
        };
        let params = ModelParams::init(config, 7);
        let (features, coords) = random_cloud(12, 3);
        let (out, _) = params.forward(&features, &coords).unwrap();
        assert_eq!(out.logits.shape(), &[12, 5]);
        assert_eq!(out.embeddings.shape(), &[12, 4]);
        assert_eq!(out.confidence.len(), 12);
    }

    #[test]
    fn test_permutation_equivariance() {
        let config = ModelConfig {
            hidden: 8,
            embed_dim: 4,
            k_neighbors: 4,
            num_classes: 3,
        };
        let params = ModelParams::init(config, 9);
        let (features, coords) = random_cloud(14, 4);
        let (out, _) = params.forward(&features, &coords).unwrap();

        // Reverse the point order.
        let n = features.nrows();
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut f2 = Array2::zeros(features.raw_dim());
        let mut c2 = Array2::zeros(coords.raw_dim());
        for (new_i, &old_i) in perm.iter().enumerate() {
            f2.row_mut(new_i).assign(&features.row(old_i));
            c2.row_mut(new_i).assign(&coords.row(old_i));
        }
        let (out2, _) = params.forward(&f2, &c2).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for c in 0..out.logits.ncols() {
                assert!((out.logits[[old_i, c]] - out2.logits[[new_i, c]]).abs() < 1e-12);
            }
            assert!((out.confidence[old_i] - out2.confidence[new_i]).abs() < 1e-12);
        }
    }

    #[test]
    fn test_flat_round_trip() {
        let params = ModelParams::init(ModelConfig::default(), 3);
        let flat = params.to_flat();
        let mut other = ModelParams::zeros(params.config);
        other.assign_from_flat(&flat);
        assert_eq!(params, other);
    }

    #[test]
    fn test_rejects_non_finite_features() {
        let params = ModelParams::init(
            ModelConfig {
                hidden: 4,
                embed_dim: 2,
                k_neighbors: 2,
                num_classes: 2,
            },
            1,
        );
        let (mut features, coords) = random_cloud(6, 5);
        features[[0, 0]] = f64::NAN;
        assert!(params.forward(&features, &coords).is_err());
    }
}
