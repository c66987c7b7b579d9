//! Dual encoders. Queries and documents map to fixed-length vectors and are
//! scored by inner product.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::text::tokenize;

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_query(&self, text: &str) -> Vec<f64>;
    fn encode_doc(&self, text: &str) -> Vec<f64>;
}

/// An encoder the training loop can update. Features are computed once per
/// text and reused across steps.
pub trait TrainableEncoder: Encoder {
    type Features: Send + Sync;

    fn query_features(&self, text: &str) -> Self::Features;
    fn doc_features(&self, text: &str) -> Self::Features;
    fn forward(&self, features: &Self::Features) -> Vec<f64>;
    /// Adds `∂loss/∂params` to `grad` given `∂loss/∂output`.
    fn backward(&self, features: &Self::Features, d_out: &[f64], grad: &mut [f64]);
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Token counts keyed by hash bucket, sorted by bucket.
pub type SparseFeatures = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub buckets: usize,
    pub hash_seed: u64,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            buckets: 4096,
            hash_seed: 0,
            init_seed: 0,
        }
    }
}

/// Hashed bag-of-tokens through one linear map shared by queries and
/// documents: `v = W x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    config: EncoderConfig,
    // bucket-major: weights[b * dim + r] is W[r][b]
    weights: Vec<f64>,
}

impl LinearEncoder {
    /// Weights drawn uniformly from `±sqrt(3 / dim)` (variance `1 / dim`).
    pub fn new(config: EncoderConfig) -> Self {
        assert!(config.dim > 0 && config.buckets > 0, "encoder dimensions must be positive");
        let a = (3.0 / config.dim as f64).sqrt();
        let mut r = rng::stream(config.init_seed, &["encoder-init"]);
        let weights = (0..config.dim * config.buckets).map(|_| r.gen_range(-a..a)).collect();
        Self { config, weights }
    }

    pub fn from_weights(config: EncoderConfig, weights: Vec<f64>) -> Result<Self, String> {
        let expected = config.dim * config.buckets;
        if weights.len() != expected {
            return Err(format!("expected {expected} weights, got {}", weights.len()));
        }
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn featurize(&self, text: &str) -> SparseFeatures {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            let b = (rng::hash64(self.config.hash_seed, &[&tok]) % self.config.buckets as u64) as u32;
            *counts.entry(b).or_insert(0.0) += 1.0;
        }
        counts.into_iter().collect()
    }

    fn project(&self, f: &SparseFeatures) -> Vec<f64> {
        let d = self.config.dim;
        let mut v = vec![0.0; d];
        for &(b, x) in f {
            let col = &self.weights[b as usize * d..(b as usize + 1) * d];
            for (out, w) in v.iter_mut().zip(col) {
                *out += x * w;
            }
        }
        v
    }
}

impl Encoder for LinearEncoder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode_query(&self, text: &str) -> Vec<f64> {
        self.project(&self.featurize(text))
    }

    fn encode_doc(&self, text: &str) -> Vec<f64> {
        self.project(&self.featurize(text))
    }
}

impl TrainableEncoder for LinearEncoder {
    type Features = SparseFeatures;

    fn query_features(&self, text: &str) -> SparseFeatures {
        self.featurize(text)
    }

    fn doc_features(&self, text: &str) -> SparseFeatures {
        self.featurize(text)
    }

    fn forward(&self, features: &SparseFeatures) -> Vec<f64> {
        self.project(features)
    }

    fn backward(&self, features: &SparseFeatures, d_out: &[f64], grad: &mut [f64]) {
        let d = self.config.dim;
        for &(b, x) in features {
            let col = &mut grad[b as usize * d..(b as usize + 1) * d];
            for (g, dv) in col.iter_mut().zip(d_out) {
                *g += x * dv;
            }
        }
    }

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}
