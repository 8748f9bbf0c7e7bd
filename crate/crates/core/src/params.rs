//! Named parameter tensors with gradient buffers.

use crate::error::{CoreError, Result};
use crate::scalar::{fl, Scalar};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Clone)]
pub struct Param<F: Scalar> {
    pub value: Tensor<F>,
    pub grad: Vec<F>,
}

/// All trainable tensors of a model, keyed by name. Iteration order is the
/// lexicographic name order, so seeded runs are reproducible regardless of
/// registration order.
#[derive(Clone)]
pub struct ParamStore<F: Scalar> {
    params: BTreeMap<String, Param<F>>,
    seed: u64,
}

/// Derives an independent RNG for a named stream. Hashing the name keeps
/// initialization independent of registration order.
pub fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

impl<F: Scalar> ParamStore<F> {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: BTreeMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a matrix initialized uniformly in ±sqrt(6/(fan_in+fan_out)).
    pub fn xavier(&mut self, name: &str, rows: usize, cols: usize) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = rng_for(self.seed, name);
        let data: Vec<F> =
            (0..rows * cols).map(|_| fl(rng.gen_range(-bound..bound))).collect();
        self.insert(name, Tensor::matrix(rows, cols, data).expect("xavier shape"));
    }

    /// Registers a vector (stored 1 x n) of a constant value.
    pub fn constant_row(&mut self, name: &str, n: usize, v: f64) {
        self.insert(name, Tensor::matrix(1, n, vec![fl(v); n]).expect("const shape"));
    }

    /// Registers a small random row (used for the learned no-bias embedding).
    pub fn random_row(&mut self, name: &str, n: usize, scale: f64) {
        let mut rng = rng_for(self.seed, name);
        let data: Vec<F> = (0..n).map(|_| fl(rng.gen_range(-scale..scale))).collect();
        self.insert(name, Tensor::matrix(1, n, data).expect("row shape"));
    }

    pub fn insert(&mut self, name: &str, value: Tensor<F>) {
        assert!(
            !self.params.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = vec![F::zero(); value.numel()];
        self.params.insert(name.to_string(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Result<&Param<F>> {
        self.params
            .get(name)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn value(&self, name: &str) -> &Tensor<F> {
        &self.params.get(name).unwrap_or_else(|| panic!("unknown parameter {name}")).value
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &[F]) {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        debug_assert_eq!(p.grad.len(), g.len());
        for (dst, &src) in p.grad.iter_mut().zip(g) {
            *dst = *dst + src;
        }
    }

    /// Adds `delta` to one component of a parameter (finite-difference
    /// probes in tests).
    pub fn nudge(&mut self, name: &str, index: usize, delta: F) {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        let d = p.value.data_mut();
        d[index] = d[index] + delta;
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(F::zero());
        }
    }

    /// Names in deterministic (lexicographic) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<F>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// Global L2 norm of all gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for p in self.params.values() {
            for &g in &p.grad {
                let gf = g.to_f64_lossy();
                acc += gf * gf;
            }
        }
        acc.sqrt()
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new(self.seed);
        for (name, p) in self.iter() {
            out.insert(name, p.value.cast());
        }
        out
    }
}
