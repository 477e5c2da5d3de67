//! Text encoders feeding the policy, critic and terminator heads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector of fixed dimension. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Features {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Features {
    pub fn zeros(dim: usize) -> Self {
        Features {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut f = Features::zeros(dense.len());
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                f.indices.push(i as u32);
                f.values.push(v);
            }
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    /// Must be deterministic and always return `dim()`-dimensional features.
    fn encode(&self, text: &str) -> Features;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Number of hash buckets.
    pub dim: usize,
    /// Width of the hidden layer of every trainable head.
    pub hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 1024,
            hidden: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > u32::MAX as usize {
            return Err(Error::Config(format!(
                "encoder.dim out of range: {}",
                self.dim
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("encoder.hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bag of lowercased word unigrams and bigrams hashed into `dim` buckets,
/// L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedNgramEncoder {
    dim: usize,
}

impl HashedNgramEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(
            dim > 0 && dim <= u32::MAX as usize,
            "encoder dim out of range"
        );
        HashedNgramEncoder { dim }
    }

    fn bucket(&self, hash: u64) -> u32 {
        (hash % self.dim as u64) as u32
    }
}

impl Encoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Features {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        if tokens.is_empty() {
            return Features::zeros(self.dim);
        }
        let mut buckets: Vec<u32> = Vec::with_capacity(tokens.len() * 2);
        for tok in &tokens {
            buckets.push(self.bucket(fnv1a(&[b"u", tok.as_bytes()])));
        }
        for pair in tokens.windows(2) {
            buckets.push(self.bucket(fnv1a(&[
                b"b",
                pair[0].as_bytes(),
                b"\x1f",
                pair[1].as_bytes(),
            ])));
        }
        buckets.sort_unstable();

        let mut features = Features::zeros(self.dim);
        for b in buckets {
            if features.indices.last() == Some(&b) {
                *features.values.last_mut().unwrap() += 1.0;
            } else {
                features.indices.push(b);
                features.values.push(1.0);
            }
        }
        let norm = features.norm();
        for v in &mut features.values {
            *v /= norm;
        }
        features
    }
}

/// 64-bit FNV-1a over the concatenation of `parts`. Stable across platforms
/// and toolchains, which checkpoints rely on.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for part in parts {
        for &byte in *part {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}
