//! Random instances shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sskpca::cqp::CqpProblem;
use sskpca::kernels::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `AᵀA/m + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, shift: f64) -> DMatrix<f64> {
    let a = normal_matrix(rng, m, m);
    let mut c = a.transpose() * &a / m as f64;
    for i in 0..m {
        c[(i, i)] += shift;
    }
    c
}

/// PSD of the given rank.
pub fn random_psd(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> DMatrix<f64> {
    let b = normal_matrix(rng, rank, m);
    b.transpose() * b
}

/// `C` PD, `P` PSD of rank `m − 1`, generic `b`.
pub fn random_cqp(rng: &mut ChaCha8Rng, m: usize) -> CqpProblem {
    let c = random_spd(rng, m, 0.5);
    let p = random_psd(rng, m, m - 1);
    let b = normal_vector(rng, m);
    let s2 = rng.random_range(0.5..5.0);
    CqpProblem::new(c, b, p, s2).expect("valid instance")
}

/// A connected weighted graph: a random spanning path plus random extra
/// edges.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, m: usize, density: f64) -> Graph {
    let mut w = DMatrix::zeros(m, m);
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for pair in order.windows(2) {
        let v = rng.random_range(0.1..1.0);
        w[(pair[0], pair[1])] = v;
        w[(pair[1], pair[0])] = v;
    }
    for i in 0..m {
        for j in i + 1..m {
            if rng.random_bool(density) {
                let v = rng.random_range(0.1..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Graph::from_weights(w).expect("connected by construction")
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}
