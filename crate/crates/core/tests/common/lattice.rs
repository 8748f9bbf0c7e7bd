//! Brute-force transducer alignment enumeration shared by the oracle and
//! acceptance suites.

use catt::kernels::logaddexp;
use catt::params::rng_for;
use catt::tensor::Tensor;
use rand::Rng;

/// Log-probabilities of one lattice row, computed independently of the
/// production log-softmax.
pub fn row_lp(data: &[f64], v1: usize, row: usize) -> Vec<f64> {
    let r = &data[row * v1..(row + 1) * v1];
    let mx = r.iter().cloned().fold(f64::MIN, f64::max);
    let lse = mx + r.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    r.iter().map(|x| x - lse).collect()
}

/// Recursively enumerates every monotone alignment: from node (t, u) either
/// consume a frame with blank or emit the next target label, finishing with
/// the final blank at (T-1, U). Returns the log-sum of path scores.
pub fn enumerate_paths(
    data: &[f64],
    v1: usize,
    t_len: usize,
    targets: &[usize],
    t: usize,
    u: usize,
    acc: f64,
) -> f64 {
    let u1 = targets.len() + 1;
    let lp = row_lp(data, v1, t * u1 + u);
    if t == t_len - 1 && u == targets.len() {
        return acc + lp[v1 - 1];
    }
    let mut total = f64::NEG_INFINITY;
    if t + 1 < t_len {
        total = logaddexp(
            total,
            enumerate_paths(data, v1, t_len, targets, t + 1, u, acc + lp[v1 - 1]),
        );
    }
    if u < targets.len() {
        total = logaddexp(
            total,
            enumerate_paths(data, v1, t_len, targets, t, u + 1, acc + lp[targets[u]]),
        );
    }
    total
}

pub fn random_lattice(t_len: usize, u: usize, v1: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = rng_for(seed, &format!("lattice/{t_len}/{u}/{v1}"));
    let rows = t_len * (u + 1);
    let data: Vec<f64> = (0..rows * v1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let targets: Vec<usize> = (0..u).map(|_| rng.gen_range(0..v1 - 1)).collect();
    (Tensor::matrix(rows, v1, data).unwrap(), targets)
}
