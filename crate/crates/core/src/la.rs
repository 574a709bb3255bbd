//! Vector and operator primitives: unit-norm state vectors, symmetric
//! operators in tridiagonal / sparse / dense storage, shifted products and
//! residual norms.

use std::fmt;

use thiserror::Error;

/// Norms below this are treated as exact annihilation of the iterate.
pub const UNDERFLOW_NORM: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaError {
    #[error("vector norm underflowed (below {UNDERFLOW_NORM:e})")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("operator dimension must be at least 2, got {0}")]
    TooSmall(usize),
    #[error(
        "coordinate entry ({row}, {col}) is below the diagonal; only the upper triangle is stored"
    )]
    NotUpperTriangular { row: usize, col: usize },
    #[error("index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
}

/// A real vector of unit Euclidean norm whose largest-magnitude entry is
/// positive.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    /// Normalizes `raw` and applies the sign convention.
    pub fn new(raw: Vec<f64>) -> Result<Self, LaError> {
        normalize_in_place(raw).map(StateVector)
    }

    /// Wraps entries that are already unit norm without touching them.
    /// Intended for vectors read back from files written by this crate.
    pub fn from_normalized_unchecked(entries: Vec<f64>) -> Self {
        StateVector(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &StateVector) -> Result<f64, LaError> {
        check_len(self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }
}

impl std::ops::Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm. Sequential summation of squares, with a rescaled second
/// pass only when the plain sum of squares would lose the value to
/// underflow.
pub fn norm2(v: &[f64]) -> f64 {
    let plain = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if plain > 1e-150 || plain.is_nan() {
        return plain;
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale
        * v.iter()
            .map(|x| (x / scale) * (x / scale))
            .sum::<f64>()
            .sqrt()
}

fn check_len(expected: usize, found: usize) -> Result<(), LaError> {
    if expected == found {
        Ok(())
    } else {
        Err(LaError::DimensionMismatch { expected, found })
    }
}

fn normalize_in_place(mut v: Vec<f64>) -> Result<Vec<f64>, LaError> {
    let norm = norm2(&v);
    if !norm.is_finite() {
        return Err(LaError::NonFinite);
    }
    if norm < UNDERFLOW_NORM {
        return Err(LaError::ZeroVector);
    }
    // first index of maximal magnitude decides the sign
    let mut lead = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[lead].abs() {
            lead = i;
        }
    }
    let scale = if v[lead] < 0.0 { -norm } else { norm };
    for x in &mut v {
        *x /= scale;
    }
    Ok(v)
}

/// Returns the unit vector along `v`, sign-fixed so that its
/// largest-magnitude entry is positive.
pub fn normalize(v: &[f64]) -> Result<StateVector, LaError> {
    StateVector::new(v.to_vec())
}

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LaError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_len(n, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LaError> {
        check_len(self.n, other.n)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for l in 0..n {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(l, j);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_symmetric(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// Compressed sparse rows holding the strictly off-diagonal part of a
/// symmetric matrix (both triangles), with the diagonal kept separately.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    diagonal: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    upper_nnz: usize,
}

impl SparseSymmetric {
    /// Builds from upper-triangle coordinates `(row, col, value)` with
    /// `row <= col`. Duplicate coordinates are summed.
    pub fn from_upper_coo(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, LaError> {
        let mut diagonal = vec![0.0; n];
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(LaError::IndexOutOfRange {
                    row: i,
                    col: j,
                    dim: n,
                });
            }
            if i > j {
                return Err(LaError::NotUpperTriangular { row: i, col: j });
            }
            if !v.is_finite() {
                return Err(LaError::NonFinite);
            }
            if i == j {
                diagonal[i] += v;
            } else {
                per_row[i].push((j, v));
                per_row[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().expect("previous entry exists") += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let upper_nnz = n + col_idx.len() / 2;
        Ok(Self {
            diagonal,
            row_ptr,
            col_idx,
            values,
            upper_nnz,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Upper-triangle entries in row-major order, diagonal included
    /// (explicit zeros on the diagonal are kept).
    pub fn upper_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.upper_nnz);
        for i in 0..self.dim() {
            out.push((i, i, self.diagonal[i]));
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if j > i {
                    out.push((i, j, self.values[p]));
                }
            }
        }
        out
    }

    /// Off-diagonal entries of row `i` as `(col, value)`.
    pub fn row_off_diagonal(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Tridiagonal {
        diagonal: Vec<f64>,
        off_diagonal: Vec<f64>,
    },
    Sparse(SparseSymmetric),
    Dense(DenseMatrix),
}

/// A real symmetric operator supporting `(H - shift) v` products.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    storage: Storage,
}

impl HermitianOperator {
    pub fn tridiagonal(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self, LaError> {
        let n = diagonal.len();
        if n < 2 {
            return Err(LaError::TooSmall(n));
        }
        check_len(n - 1, off_diagonal.len())?;
        if diagonal.iter().chain(&off_diagonal).any(|x| !x.is_finite()) {
            return Err(LaError::NonFinite);
        }
        Ok(Self {
            storage: Storage::Tridiagonal {
                diagonal,
                off_diagonal,
            },
        })
    }

    pub fn sparse_from_upper(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, LaError> {
        if n < 2 {
            return Err(LaError::TooSmall(n));
        }
        Ok(Self {
            storage: Storage::Sparse(SparseSymmetric::from_upper_coo(n, entries)?),
        })
    }

    pub fn dense(matrix: DenseMatrix) -> Result<Self, LaError> {
        if matrix.dim() < 2 {
            return Err(LaError::TooSmall(matrix.dim()));
        }
        if let Some((row, col)) = matrix.is_symmetric() {
            return Err(LaError::Asymmetric { row, col });
        }
        if matrix.data.iter().any(|x| !x.is_finite()) {
            return Err(LaError::NonFinite);
        }
        Ok(Self {
            storage: Storage::Dense(matrix),
        })
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Tridiagonal { diagonal, .. } => diagonal.len(),
            Storage::Sparse(s) => s.dim(),
            Storage::Dense(d) => d.dim(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        match &self.storage {
            Storage::Tridiagonal {
                diagonal,
                off_diagonal,
            } => {
                for i in 0..n {
                    m.set(i, i, diagonal[i]);
                }
                for (i, &e) in off_diagonal.iter().enumerate() {
                    m.set(i, i + 1, e);
                    m.set(i + 1, i, e);
                }
            }
            Storage::Sparse(s) => {
                for i in 0..n {
                    m.set(i, i, s.diagonal[i]);
                    for (j, v) in s.row_off_diagonal(i) {
                        m.set(i, j, v);
                    }
                }
            }
            Storage::Dense(d) => m = d.clone(),
        }
        m
    }

    pub fn trace(&self) -> f64 {
        match &self.storage {
            Storage::Tridiagonal { diagonal, .. } => diagonal.iter().sum(),
            Storage::Sparse(s) => s.diagonal.iter().sum(),
            Storage::Dense(d) => (0..d.dim()).map(|i| d.get(i, i)).sum(),
        }
    }

    /// Writes `(H - shift) x` into `out`. The shift is folded into the
    /// diagonal before multiplying, so a zero shift gives the plain product.
    pub fn shifted_matvec_into(
        &self,
        shift: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<(), LaError> {
        let n = self.dim();
        check_len(n, x.len())?;
        check_len(n, out.len())?;
        match &self.storage {
            Storage::Tridiagonal {
                diagonal: d,
                off_diagonal: e,
            } => {
                // 3N - 2 multiplications
                out[0] = (d[0] - shift) * x[0] + e[0] * x[1];
                for i in 1..n - 1 {
                    out[i] = e[i - 1] * x[i - 1] + (d[i] - shift) * x[i] + e[i] * x[i + 1];
                }
                out[n - 1] = e[n - 2] * x[n - 2] + (d[n - 1] - shift) * x[n - 1];
            }
            Storage::Sparse(s) => {
                for i in 0..n {
                    let mut acc = (s.diagonal[i] - shift) * x[i];
                    for p in s.row_ptr[i]..s.row_ptr[i + 1] {
                        acc += s.values[p] * x[s.col_idx[p]];
                    }
                    out[i] = acc;
                }
            }
            Storage::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = m.row(i);
                    let mut acc = 0.0;
                    for (j, (&a, &xj)) in row.iter().zip(x).enumerate() {
                        acc += if i == j { (a - shift) * xj } else { a * xj };
                    }
                    *o = acc;
                }
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LaError> {
        let mut out = vec![0.0; self.dim()];
        self.shifted_matvec_into(0.0, x, &mut out)?;
        Ok(out)
    }

    /// One purification step: `normalize((H - shift) v)`.
    pub fn apply_shifted(&self, shift: f64, v: &StateVector) -> Result<StateVector, LaError> {
        let mut out = vec![0.0; self.dim()];
        self.shifted_matvec_into(shift, v, &mut out)?;
        StateVector::new(out)
    }

    /// `sqrt(|(H - eps_k) v|^2 / N)`, the computable termination metric.
    pub fn residual_sigma_bar(&self, eps_k: f64, v: &[f64]) -> Result<f64, LaError> {
        let mut out = vec![0.0; self.dim()];
        self.shifted_matvec_into(eps_k, v, &mut out)?;
        Ok(norm2(&out) / (self.dim() as f64).sqrt())
    }
}

impl fmt::Display for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.storage {
            Storage::Tridiagonal { .. } => "tridiagonal",
            Storage::Sparse(_) => "sparse",
            Storage::Dense(_) => "dense",
        };
        write!(f, "{kind} symmetric operator of dimension {}", self.dim())
    }
}

/// Euclidean distance between two vectors.
pub fn separation(a: &[f64], b: &[f64]) -> Result<f64, LaError> {
    check_len(a.len(), b.len())?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(norm2(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = f64::EPSILON;

    fn diag(values: &[f64]) -> HermitianOperator {
        let n = values.len();
        let entries: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        HermitianOperator::sparse_from_upper(n, &entries).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 4.0]).unwrap().as_slice(), &[0.6, 0.8]);
        assert_eq!(
            normalize(&[1.0, 0.0, 0.0]).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(normalize(&[1.0; 4]).unwrap().as_slice(), &[0.5; 4]);
    }

    #[test]
    fn normalize_flips_sign_to_positive_lead() {
        let v = normalize(&[-3.0, 1.0]).unwrap();
        assert!(v[0] > 0.0 && v[1] < 0.0);
    }

    #[test]
    fn normalize_rejects_zero_and_tiny() {
        assert_eq!(normalize(&[0.0, 0.0]), Err(LaError::ZeroVector));
        assert_eq!(normalize(&[1e-310, 0.0]), Err(LaError::ZeroVector));
        assert_eq!(normalize(&[f64::NAN, 1.0]), Err(LaError::NonFinite));
    }

    #[test]
    fn normalize_handles_small_but_representable_norms() {
        let v = normalize(&[3e-200, 4e-200]).unwrap();
        assert!((v[0] - 0.6).abs() < 4.0 * EPS);
        assert!((v[1] - 0.8).abs() < 4.0 * EPS);
    }

    #[test]
    fn matvec_examples() {
        let h = diag(&[1.0, 2.0, 3.0]);
        assert_eq!(h.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let swap = HermitianOperator::tridiagonal(vec![0.0, 0.0], vec![1.0]).unwrap();
        assert_eq!(swap.matvec(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(
            swap.matvec(&[1.0, 0.0, 0.0]),
            Err(LaError::DimensionMismatch {
                expected: 2,
                found: 3
            })
        );
    }

    #[test]
    fn apply_shifted_examples() {
        let h = diag(&[1.0, 2.0]);
        let v = normalize(&[1.0, 1.0]).unwrap();
        let w = h.apply_shifted(2.0, &v).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);

        let h = diag(&[1.0, 2.0, 3.0]);
        let v = normalize(&[1.0, 1.0, 1.0]).unwrap();
        let w = h.apply_shifted(3.0, &v).unwrap();
        let w = h.apply_shifted(2.0, &w).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_shifted_on_exact_eigenvector_underflows() {
        let h = diag(&[1.0, 2.0]);
        let v = normalize(&[0.0, 1.0]).unwrap();
        assert_eq!(h.apply_shifted(2.0, &v), Err(LaError::ZeroVector));
    }

    #[test]
    fn residual_examples() {
        let h = diag(&[1.0, 2.0, 3.0]);
        let e2 = normalize(&[0.0, 1.0, 0.0]).unwrap();
        assert!(h.residual_sigma_bar(2.0, &e2).unwrap() <= 8.0 * EPS);
        let h = diag(&[1.0, 2.0]);
        let s = h.residual_sigma_bar(1.0, &[0.0, 1.0]).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 4.0 * EPS);
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((separation(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < EPS);
        assert_eq!(separation(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(separation(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert_eq!(
            HermitianOperator::tridiagonal(vec![1.0], vec![]),
            Err(LaError::TooSmall(1))
        );
        assert_eq!(
            HermitianOperator::sparse_from_upper(3, &[(2, 1, 1.0)]),
            Err(LaError::NotUpperTriangular { row: 2, col: 1 })
        );
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(
            HermitianOperator::dense(m),
            Err(LaError::Asymmetric { row: 0, col: 1 })
        );
    }

    #[test]
    fn sparse_stores_symmetric_closure() {
        let h = HermitianOperator::sparse_from_upper(3, &[(0, 1, 2.5), (1, 1, 1.0), (0, 2, -1.0)])
            .unwrap();
        let d = h.to_dense();
        assert_eq!(d.is_symmetric(), None);
        assert_eq!(d.get(1, 0), 2.5);
        assert_eq!(d.get(2, 0), -1.0);
    }

    #[test]
    fn sparse_upper_entries_round_trip() {
        let entries = vec![
            (0, 0, 1.0),
            (0, 2, 0.5),
            (1, 1, -2.0),
            (1, 2, 3.0),
            (2, 2, 0.0),
        ];
        let h = HermitianOperator::sparse_from_upper(3, &entries).unwrap();
        let Storage::Sparse(s) = h.storage() else {
            unreachable!()
        };
        assert_eq!(s.upper_entries(), entries);
    }
}
