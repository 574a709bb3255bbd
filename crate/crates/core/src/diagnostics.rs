//! Measurements taken on runs: error against a known eigenvector or
//! eigen-subspace, two-trajectory Lyapunov estimates, convergence-ratio
//! bounds and shift histograms.

use thiserror::Error;

use crate::eigensolve::Spectrum;
use crate::la::{dot, norm2, HermitianOperator, LaError, StateVector};
use crate::rng::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("basis is not orthonormal (Gram deviation {0:e})")]
    NonOrthonormalBasis(f64),
    #[error("companion trajectory coincides with the fiducial one")]
    DegenerateOffset,
    #[error("initial offset {0:e} outside [1e-16, 1e-8]")]
    OffsetOutOfRange(f64),
    #[error("trajectories collapsed onto each other at step {0}")]
    Collapsed(usize),
    #[error("renormalization interval must be positive")]
    ZeroInterval,
    #[error("levels {0} and {1} coincide; their gap cannot enter a ratio")]
    DegenerateGap(usize, usize),
    #[error("delta must be positive")]
    NonPositiveDelta,
    #[error("shift sequence is empty")]
    EmptyShifts,
    #[error(transparent)]
    La(#[from] LaError),
}

const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// RMS deviation from a reference vector, minimized over the global sign.
pub fn sigma_error(v: &[f64], reference: &[f64]) -> Result<f64, LaError> {
    if v.len() != reference.len() {
        return Err(LaError::DimensionMismatch {
            expected: reference.len(),
            found: v.len(),
        });
    }
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (a, b) in v.iter().zip(reference) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    Ok((minus.min(plus) / v.len() as f64).sqrt())
}

/// Largest entry of `|G - I|` for the Gram matrix of `basis`.
pub fn gram_deviation(basis: &[StateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - target).abs());
        }
    }
    worst
}

/// RMS norm of the component of `v` outside `span(basis)`.
pub fn sigma_subspace(v: &[f64], basis: &[StateVector]) -> Result<f64, DiagnosticsError> {
    for e in basis {
        if e.len() != v.len() {
            return Err(LaError::DimensionMismatch {
                expected: v.len(),
                found: e.len(),
            }
            .into());
        }
    }
    let deviation = gram_deviation(basis);
    if deviation > ORTHONORMAL_TOLERANCE {
        return Err(DiagnosticsError::NonOrthonormalBasis(deviation));
    }
    let mut residual = v.to_vec();
    for e in basis {
        let c = dot(e, v);
        for (r, x) in residual.iter_mut().zip(e.iter()) {
            *r -= c * x;
        }
    }
    Ok(norm2(&residual) / (v.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovRow {
    pub n: usize,
    pub zeta: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovTrace {
    pub rows: Vec<LyapunovRow>,
    pub renorm_interval: usize,
}

impl LyapunovTrace {
    pub fn final_lambda(&self) -> Option<f64> {
        self.rows.last().map(|r| r.lambda)
    }
}

/// Two-trajectory (Benettin) estimate of the largest Lyapunov exponent of
/// the map `advance(n, x)`.
///
/// Both trajectories are advanced with the same step index. After every
/// `renorm_interval` steps the companion is pulled back along the current
/// separation direction to the initial distance. When `projective` is set,
/// the companion is sign-aligned with the fiducial before measuring, so that
/// `v` and `-v` count as the same point.
pub fn benettin<F>(
    mut advance: F,
    fiducial: Vec<f64>,
    companion: Vec<f64>,
    steps: usize,
    renorm_interval: usize,
    projective: bool,
) -> Result<LyapunovTrace, DiagnosticsError>
where
    F: FnMut(usize, &[f64]) -> Result<Vec<f64>, LaError>,
{
    if renorm_interval == 0 {
        return Err(DiagnosticsError::ZeroInterval);
    }
    let distance = |a: &[f64], b: &[f64]| -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&diff)
    };
    let mut x = fiducial;
    let mut y = companion;
    if projective && dot(&x, &y) < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
    }
    let d0 = distance(&x, &y);
    if d0 == 0.0 {
        return Err(DiagnosticsError::DegenerateOffset);
    }

    let mut start = d0;
    let mut accumulated = 0.0;
    let mut rows = Vec::with_capacity(steps);
    for n in 1..=steps {
        x = advance(n - 1, &x)?;
        y = advance(n - 1, &y)?;
        if projective && dot(&x, &y) < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        let zeta = distance(&x, &y);
        let partial = (zeta / start).ln();
        rows.push(LyapunovRow {
            n,
            zeta,
            lambda: (accumulated + partial) / n as f64,
        });
        if n % renorm_interval == 0 {
            if zeta == 0.0 {
                return Err(DiagnosticsError::Collapsed(n));
            }
            accumulated += partial;
            let scale = d0 / zeta;
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = xi + (*yi - xi) * scale;
            }
            start = distance(&x, &y);
            if start == 0.0 {
                return Err(DiagnosticsError::Collapsed(n));
            }
        }
    }
    Ok(LyapunovTrace {
        rows,
        renorm_interval,
    })
}

/// Default Benettin renormalization interval for operator runs.
pub const DEFAULT_RENORM_INTERVAL: usize = 10;

/// Lyapunov estimate for the purification map driven by a cyclic shift
/// sequence: step `n` applies `H - shifts[n % len]` and renormalizes.
///
/// The companion starts at `normalize(v0 + initial_offset * u)` with `u` a
/// random unit direction drawn from `seed`.
pub fn lyapunov_estimate(
    op: &HermitianOperator,
    shifts: &[f64],
    v0: &StateVector,
    initial_offset: f64,
    steps: usize,
    renorm_interval: usize,
    seed: u64,
) -> Result<LyapunovTrace, DiagnosticsError> {
    if initial_offset == 0.0 {
        return Err(DiagnosticsError::DegenerateOffset);
    }
    if !(1e-16..=1e-8).contains(&initial_offset) {
        return Err(DiagnosticsError::OffsetOutOfRange(initial_offset));
    }
    if shifts.is_empty() {
        return Err(DiagnosticsError::EmptyShifts);
    }
    let mut rng = SeededRng::new(seed);
    let direction = StateVector::new(rng.symmetric_vec(v0.len()))?;
    let perturbed: Vec<f64> = v0
        .iter()
        .zip(direction.iter())
        .map(|(a, b)| a + initial_offset * b)
        .collect();
    let companion = StateVector::new(perturbed)?;
    let mut buffer = vec![0.0; op.dim()];
    benettin(
        |n, x| {
            op.shifted_matvec_into(shifts[n % shifts.len()], x, &mut buffer)?;
            Ok(StateVector::new(buffer.clone())?.into_inner())
        },
        v0.to_vec(),
        companion.into_inner(),
        steps,
        renorm_interval,
        true,
    )
}

/// `log10` of the ratio bound `r_{i,k}` for every distinct level `i`,
/// computed in log space:
///
/// ```text
/// log r_i = sum_{j != i,k} m_j log|(e_i - e_j)/(e_k - e_j)| + m_i log|delta/(e_k - e_i)|
/// ```
///
/// `initial_ratio_bound` multiplies every entry (pass 1 for the bare
/// bound). The target slot holds `log10(initial_ratio_bound)`.
pub fn convergence_ratios(
    spectrum: &Spectrum,
    k: usize,
    counts: &[usize],
    delta: f64,
    initial_ratio_bound: f64,
) -> Result<Vec<f64>, DiagnosticsError> {
    let levels = spectrum.distinct();
    if counts.len() != levels.len() {
        return Err(LaError::DimensionMismatch {
            expected: levels.len(),
            found: counts.len(),
        }
        .into());
    }
    if !(delta > 0.0) {
        return Err(DiagnosticsError::NonPositiveDelta);
    }
    for (i, &e) in levels.iter().enumerate() {
        if i != k && e == levels[k] {
            return Err(DiagnosticsError::DegenerateGap(i, k));
        }
    }
    let prefactor = initial_ratio_bound.log10();
    let ek = levels[k];
    let out = levels
        .iter()
        .enumerate()
        .map(|(i, &ei)| {
            if i == k {
                return prefactor;
            }
            let mut log_r = 0.0;
            for (j, &ej) in levels.iter().enumerate() {
                if j == i || j == k || counts[j] == 0 {
                    continue;
                }
                log_r += counts[j] as f64 * ((ei - ej).abs().ln() - (ek - ej).abs().ln());
            }
            if counts[i] > 0 {
                log_r += counts[i] as f64 * (delta.ln() - (ek - ei).abs().ln());
            }
            prefactor + log_r / std::f64::consts::LN_10
        })
        .collect();
    Ok(out)
}

/// Occurrence count of each index in `history`, over `n_levels` slots.
pub fn shift_histogram(history: &[usize], n_levels: usize) -> Vec<usize> {
    let mut counts = vec![0; n_levels];
    for &j in history {
        counts[j] += 1;
    }
    counts
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0;
        for &idx in &order[start..=end] {
            ranks[idx] = rank;
        }
        start = end + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Returns `None`
/// when either input has no spread.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}
