//! Eigenvalue inputs for purification: implicit QL on symmetric
//! tridiagonal matrices, spectrum statistics (smallest spacing and band
//! width), and a cyclic Jacobi eigendecomposition used as an independent
//! reference.

use thiserror::Error;

use crate::la::{DenseMatrix, HermitianOperator, LaError};
use crate::rng::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("eigenvalue {0} did not deflate within the sweep budget")]
    NoConvergence(usize),
    #[error("Jacobi rotations did not converge within {0} sweeps")]
    JacobiNoConvergence(usize),
    #[error("all eigenvalues are degenerate; no level spacing exists")]
    AllDegenerate,
    #[error("eigenvalues must be finite and sorted ascending")]
    Unsorted,
    #[error("matrix is empty")]
    Empty,
    #[error(transparent)]
    La(#[from] LaError),
}

/// Default per-eigenvalue iteration budget for [`ql_eigenvalues`].
pub const DEFAULT_QL_SWEEPS: usize = 30;

/// Default relative tolerance below which adjacent eigenvalues count as one
/// degenerate level.
pub const DEFAULT_MULTIPLICITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self, EigenError> {
        let n = diagonal.len();
        if n == 0 {
            return Err(EigenError::Empty);
        }
        if off_diagonal.len() != n - 1 {
            return Err(LaError::DimensionMismatch {
                expected: n - 1,
                found: off_diagonal.len(),
            }
            .into());
        }
        if diagonal.iter().chain(&off_diagonal).any(|x| !x.is_finite()) {
            return Err(LaError::NonFinite.into());
        }
        Ok(Self {
            diagonal,
            off_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_operator(&self) -> Result<HermitianOperator, LaError> {
        HermitianOperator::tridiagonal(self.diagonal.clone(), self.off_diagonal.clone())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, self.diagonal[i]);
        }
        for (i, &e) in self.off_diagonal.iter().enumerate() {
            m.set(i, i + 1, e);
            m.set(i + 1, i, e);
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    /// Number of eigenvalues strictly below `x`, from the signs of the
    /// Sturm sequence of leading principal minors.
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.dim();
        let scale = self
            .diagonal
            .iter()
            .chain(&self.off_diagonal)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let pivmin = f64::EPSILON * f64::EPSILON * scale * scale;
        let mut count = 0;
        let mut q = self.diagonal[0] - x;
        for i in 0..n {
            if i > 0 {
                let e = self.off_diagonal[i - 1];
                q = self.diagonal[i] - x - e * e / q;
            }
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }
}

/// Random tridiagonal matrix with diagonal entries i.i.d. uniform on
/// `[-1, 1)` and every off-diagonal entry equal to 1.
pub fn generate_random_tridiagonal(n: usize, seed: u64) -> TridiagonalMatrix {
    let mut rng = SeededRng::new(seed);
    TridiagonalMatrix {
        diagonal: rng.symmetric_vec(n),
        off_diagonal: vec![1.0; n.saturating_sub(1)],
    }
}

/// All eigenvalues of a symmetric tridiagonal matrix by the implicit QL
/// method with Wilkinson-style shifts, sorted ascending.
///
/// An off-diagonal element is deflated once
/// `|e_m| <= eps * (|d_m| + |d_{m+1}|)`. `max_sweeps` bounds the QL
/// iterations spent on each eigenvalue.
pub fn ql_eigenvalues(t: &TridiagonalMatrix, max_sweeps: usize) -> Result<Vec<f64>, EigenError> {
    let n = t.dim();
    let mut d = t.diagonal.clone();
    let mut e = t.off_diagonal.clone();
    e.push(0.0);

    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > max_sweeps {
                return Err(EigenError::NoConvergence(l));
            }

            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // recover from underflow and restart this eigenvalue
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues ascending with orthonormal eigenvectors stored as the
/// columns of `vectors`.
#[derive(Clone, Debug)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl DenseEigen {
    pub fn vector(&self, index: usize) -> Vec<f64> {
        self.vectors.column(index)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix.
///
/// Sweeps rotate every nonzero off-diagonal pair until the largest
/// off-diagonal magnitude falls below `1e-13` times the Frobenius norm.
/// This shares no code with [`ql_eigenvalues`], which is what makes it
/// usable as a reference for it.
pub fn jacobi_eigen(h: &DenseMatrix) -> Result<DenseEigen, EigenError> {
    let n = h.dim();
    if n == 0 {
        return Err(EigenError::Empty);
    }
    if let Some((row, col)) = h.is_symmetric() {
        return Err(LaError::Asymmetric { row, col }.into());
    }
    let tol = 1e-13 * h.frobenius_norm();
    let mut a = h.clone();
    // rows of `vt` are the eigenvectors; transposed at the end
    let mut vt = DenseMatrix::identity(n);

    let off_max = |a: &DenseMatrix| {
        let mut m = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                m = m.max(a.get(p, q).abs());
            }
        }
        m
    };

    let mut converged = off_max(&a) < tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(EigenError::JacobiNoConvergence(JACOBI_MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a.set(k, p, new_kp);
                    a.set(p, k, new_kp);
                    a.set(k, q, new_kq);
                    a.set(q, k, new_kq);
                }
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for k in 0..n {
                    let vp = vt.get(p, k);
                    let vq = vt.get(q, k);
                    vt.set(p, k, c * vp - s * vq);
                    vt.set(q, k, s * vp + c * vq);
                }
            }
        }
        converged = off_max(&a) < tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = DenseMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, vt.get(src, k));
        }
    }
    Ok(DenseEigen { values, vectors })
}

/// Sorted eigenvalues together with their distinct levels, smallest level
/// spacing `delta` and natural band width `(max - min) / delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    dim: usize,
    distinct: Vec<f64>,
    multiplicities: Vec<usize>,
    delta: f64,
    band_width: f64,
    multiplicity_tolerance: f64,
}

impl Spectrum {
    /// Groups sorted `eigenvalues` into distinct levels. Adjacent values
    /// closer than `multiplicity_tolerance * max(1, |value|)` are one level,
    /// represented by the group mean.
    pub fn from_sorted(
        eigenvalues: Vec<f64>,
        multiplicity_tolerance: f64,
    ) -> Result<Self, EigenError> {
        if eigenvalues.is_empty() {
            return Err(EigenError::Empty);
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) || eigenvalues.windows(2).any(|w| w[0] > w[1])
        {
            return Err(EigenError::Unsorted);
        }
        let mut groups: Vec<(f64, usize)> = Vec::new();
        let mut prev = eigenvalues[0];
        for (idx, &x) in eigenvalues.iter().enumerate() {
            let same = idx > 0 && x - prev <= multiplicity_tolerance * prev.abs().max(1.0);
            match groups.last_mut() {
                Some((sum, count)) if same => {
                    *sum += x;
                    *count += 1;
                }
                _ => groups.push((x, 1)),
            }
            prev = x;
        }
        let distinct: Vec<f64> = groups.iter().map(|&(s, c)| s / c as f64).collect();
        let multiplicities = groups.iter().map(|&(_, c)| c).collect();
        Self::assemble(distinct, multiplicities, multiplicity_tolerance)
    }

    /// Builds from distinct levels known exactly, each with its multiplicity.
    pub fn from_levels(
        levels: &[(f64, usize)],
        multiplicity_tolerance: f64,
    ) -> Result<Self, EigenError> {
        if levels.iter().all(|l| l.1 == 0) {
            return Err(EigenError::Empty);
        }
        if levels.windows(2).any(|w| w[0].0 >= w[1].0) || levels.iter().any(|l| !l.0.is_finite()) {
            return Err(EigenError::Unsorted);
        }
        let distinct = levels.iter().map(|l| l.0).collect();
        let multiplicities = levels.iter().map(|l| l.1).collect();
        Self::assemble(distinct, multiplicities, multiplicity_tolerance)
    }

    fn assemble(
        distinct: Vec<f64>,
        multiplicities: Vec<usize>,
        multiplicity_tolerance: f64,
    ) -> Result<Self, EigenError> {
        if distinct.len() < 2 {
            return Err(EigenError::AllDegenerate);
        }
        let delta = distinct
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let band_width = (distinct[distinct.len() - 1] - distinct[0]) / delta;
        Ok(Self {
            dim: multiplicities.iter().sum(),
            distinct,
            multiplicities,
            delta,
            band_width,
            multiplicity_tolerance,
        })
    }

    /// Every eigenvalue with repetition (levels repeated by multiplicity),
    /// ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for (&value, &count) in self.distinct.iter().zip(&self.multiplicities) {
            out.extend(std::iter::repeat_n(value, count));
        }
        out
    }

    /// Operator dimension: the multiplicities summed.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distinct(&self) -> &[f64] {
        &self.distinct
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn n_distinct(&self) -> usize {
        self.distinct.len()
    }

    /// Smallest spacing between adjacent distinct levels.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn band_width(&self) -> f64 {
        self.band_width
    }

    pub fn multiplicity_tolerance(&self) -> f64 {
        self.multiplicity_tolerance
    }

    /// Distinct-level index matching `value` within the degeneracy
    /// tolerance.
    pub fn level_of(&self, value: f64) -> Option<usize> {
        let tol = self.multiplicity_tolerance * value.abs().max(1.0);
        self.distinct.iter().position(|&x| (x - value).abs() <= tol)
    }

    /// Distinct-level index that contains the `index`-th eigenvalue of the
    /// full sorted list.
    pub fn level_of_eigenvalue_index(&self, index: usize) -> Option<usize> {
        if index >= self.dim {
            return None;
        }
        let mut upper = 0;
        for (level, &m) in self.multiplicities.iter().enumerate() {
            upper += m;
            if index < upper {
                return Some(level);
            }
        }
        None
    }

    /// Index of the distinct level just below the smallest spacing.
    pub fn smallest_gap_level(&self) -> usize {
        let mut best = 0;
        for i in 1..self.distinct.len() - 1 {
            if self.distinct[i + 1] - self.distinct[i]
                < self.distinct[best + 1] - self.distinct[best]
            {
                best = i;
            }
        }
        best
    }

    /// Distance from each distinct level to its nearest neighbour.
    pub fn local_gaps(&self) -> Vec<f64> {
        let d = &self.distinct;
        (0..d.len())
            .map(|i| {
                let below = if i > 0 {
                    d[i] - d[i - 1]
                } else {
                    f64::INFINITY
                };
                let above = if i + 1 < d.len() {
                    d[i + 1] - d[i]
                } else {
                    f64::INFINITY
                };
                below.min(above)
            })
            .collect()
    }
}

/// Spectrum statistics for a sorted eigenvalue list.
pub fn spectrum_stats(
    eigenvalues: &[f64],
    multiplicity_tolerance: f64,
) -> Result<Spectrum, EigenError> {
    Spectrum::from_sorted(eigenvalues.to_vec(), multiplicity_tolerance)
}
