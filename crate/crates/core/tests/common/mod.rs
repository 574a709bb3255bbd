#![allow(dead_code)]

use purify_core::eigensolve::{jacobi_eigen, DenseEigen};
use purify_core::la::{DenseMatrix, HermitianOperator};
use purify_core::rng::SeededRng;

/// Dense symmetric matrix with entries uniform on [-1, 1).
pub fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = SeededRng::new(seed);
    let mut m = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let x = rng.symmetric();
            m.set(i, j, x);
            m.set(j, i, x);
        }
    }
    m
}

pub fn min_gap(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Random dense operator whose spectrum has no gap below `gap`, with its
/// oracle decomposition.
pub fn separated_dense(n: usize, seed: u64, gap: f64) -> (HermitianOperator, DenseEigen) {
    let mut s = seed;
    loop {
        let m = random_symmetric(n, s);
        let eig = jacobi_eigen(&m).unwrap();
        if min_gap(&eig.values) > gap {
            return (HermitianOperator::dense(m).unwrap(), eig);
        }
        s = s.wrapping_add(1_000_003);
    }
}

pub fn coefficients(eig: &DenseEigen, v: &[f64]) -> Vec<f64> {
    (0..eig.values.len())
        .map(|i| eig.vector(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Ascending eigenvalues and matching eigenvectors from nalgebra, used as
/// an oracle independent of the crate's own solvers.
pub fn nalgebra_eigen(m: &DenseMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.dim();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}
