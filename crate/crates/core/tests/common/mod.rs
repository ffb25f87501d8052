//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use fdprox::regularizer::{Regularizer, RegularizerKind};
use fdprox::rng;
use fdprox::signal::Shape;
use nalgebra::DMatrix;
use rand::Rng;

/// Minimizer of `0.5 (x - y)^2 + lambda |x|` by golden-section search.
/// Objective values are compared through their exact difference so the
/// bracket keeps shrinking below the rounding level of the objective.
pub fn golden_l1(y: f64, lambda: f64) -> f64 {
    let diff = |a: f64, b: f64| 0.5 * (a - b) * (a + b - 2.0 * y) + lambda * (a.abs() - b.abs());
    let (mut lo, mut hi) = (-y.abs() - 1.0, y.abs() + 1.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    for _ in 0..400 {
        if hi - lo <= 1e-14 * (1.0 + y.abs()) {
            break;
        }
        if diff(x1, x2) <= 0.0 {
            hi = x2;
            x2 = x1;
            x1 = hi - r * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + r * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

/// Singular value shrinkage through nalgebra's SVD. `data` is row-major.
pub fn nuclear_prox_oracle(data: &[f64], rows: usize, cols: usize, lambda: f64) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, data);
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let s = svd.singular_values.map(|x| (x - lambda).max(0.0));
    let out = u * DMatrix::from_diagonal(&s) * vt;
    let mut flat = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            flat.push(out[(r, c)]);
        }
    }
    flat
}

pub fn frob(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A random `s`-sparse vector with +-1 entries.
pub fn sparse_vector(r: &mut rng::Rng, p: usize, s: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    for i in rand::seq::index::sample(r, p, s) {
        v[i] = if r.random::<bool>() { 1.0 } else { -1.0 };
    }
    v
}

/// A random rank-`rank` `d x d` matrix, row-major.
pub fn lowrank_matrix(r: &mut rng::Rng, d: usize, rank: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for _ in 0..rank {
        let u = rng::normal_vec(r, d);
        let v = rng::normal_vec(r, d);
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] += u[i] * v[j];
            }
        }
    }
    m
}

pub fn regularizer(kind: RegularizerKind, shape: Shape) -> Regularizer {
    Regularizer::new(kind, shape).unwrap()
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
