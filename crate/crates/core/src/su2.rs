//! Total angular momentum `L^2` of `N` distinguishable spins of magnitude
//! `S` restricted to a fixed `L_z` sector, its exactly known spectrum
//! `l(l+1)`, and extraction of degenerate eigen-subspaces by replaying one
//! controlled shift sequence on several random starts.
//!
//! Half-integers are carried doubled (`two_s = 2S`, `two_m = 2m`) so that
//! all bookkeeping stays in integers.

use std::collections::HashMap;

use thiserror::Error;

use crate::eigensolve::{jacobi_eigen, EigenError, Spectrum, DEFAULT_MULTIPLICITY_TOLERANCE};
use crate::la::{dot, DenseMatrix, HermitianOperator, LaError, StateVector};
use crate::richardson::{
    replay_sequence, run_stabilized, Reference, RichardsonError, RunConfig, RunResult,
};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum Su2Error {
    #[error("no configurations of {n_spins} spins of 2S={two_s} have 2M={two_mz}")]
    EmptySector {
        n_spins: usize,
        two_s: u32,
        two_mz: i32,
    },
    #[error("need at least one spin")]
    NoSpins,
    #[error("level l(l+1) with 2l={0} is not in this sector's spectrum")]
    UnknownLevel(u32),
    #[error("replayed vectors are numerically dependent (smallest Gram eigenvalue {0:e})")]
    RankDeficient(f64),
    #[error("requested {requested} vectors but the level has multiplicity {multiplicity}")]
    WrongMultiplicity {
        requested: usize,
        multiplicity: usize,
    },
    #[error(transparent)]
    La(#[from] LaError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Richardson(#[from] RichardsonError),
}

/// `N` spins of magnitude `S` in the sector `sum m_i = M`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinSystem {
    n_spins: usize,
    two_s: u32,
    two_mz: i32,
}

impl SpinSystem {
    pub fn new(n_spins: usize, two_s: u32, two_mz: i32) -> Result<Self, Su2Error> {
        if n_spins == 0 {
            return Err(Su2Error::NoSpins);
        }
        let two_max = (n_spins as i64) * two_s as i64;
        let mz = two_mz as i64;
        if mz.abs() > two_max || (two_max - mz) % 2 != 0 {
            return Err(Su2Error::EmptySector {
                n_spins,
                two_s,
                two_mz,
            });
        }
        Ok(Self {
            n_spins,
            two_s,
            two_mz,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn two_mz(&self) -> i32 {
        self.two_mz
    }

    fn s_s1(&self) -> f64 {
        let s = self.two_s as f64 / 2.0;
        s * (s + 1.0)
    }

    /// Number of configurations with each total `2M`, indexed by
    /// `(2M + N*2S) / 2`.
    fn total_m_counts(&self) -> Vec<u64> {
        let per_spin = self.two_s as usize + 1;
        let mut counts = vec![1u64];
        for _ in 0..self.n_spins {
            let mut next = vec![0u64; counts.len() + per_spin - 1];
            for (i, &c) in counts.iter().enumerate() {
                for slot in &mut next[i..i + per_spin] {
                    *slot += c;
                }
            }
            counts = next;
        }
        counts
    }

    fn count_with_two_m(&self, two_m: i64) -> u64 {
        let two_max = self.n_spins as i64 * self.two_s as i64;
        if two_m.abs() > two_max || (two_max - two_m) % 2 != 0 {
            return 0;
        }
        self.total_m_counts()[((two_m + two_max) / 2) as usize]
    }

    pub fn sector_dimension(&self) -> u64 {
        self.count_with_two_m(self.two_mz as i64)
    }

    /// Sector configurations `(2m_1, ..., 2m_N)`, lexicographically
    /// descending.
    pub fn basis(&self) -> Vec<Vec<i32>> {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(self.n_spins);
        self.enumerate(&mut current, self.two_mz, &mut out);
        out
    }

    fn enumerate(&self, current: &mut Vec<i32>, remaining: i32, out: &mut Vec<Vec<i32>>) {
        let left = (self.n_spins - current.len()) as i32;
        if left == 0 {
            if remaining == 0 {
                out.push(current.clone());
            }
            return;
        }
        let two_s = self.two_s as i32;
        let reach = (left - 1) * two_s;
        let mut m = two_s;
        while m >= -two_s {
            if (remaining - m).abs() <= reach {
                current.push(m);
                self.enumerate(current, remaining - m, out);
                current.pop();
            }
            m -= 2;
        }
    }

    /// Distinct levels `(2l, multiplicity)` of `L^2` in this sector, from
    /// `count(M = l) - count(M = l + 1)`.
    pub fn levels(&self) -> Vec<(u32, u64)> {
        let two_max = self.n_spins as i64 * self.two_s as i64;
        let mut out = Vec::new();
        let mut two_l = (self.two_mz as i64).abs();
        while two_l <= two_max {
            let mult = self.count_with_two_m(two_l) - self.count_with_two_m(two_l + 2);
            if mult > 0 {
                out.push((two_l as u32, mult));
            }
            two_l += 2;
        }
        out
    }
}

pub fn l_eigenvalue(two_l: u32) -> f64 {
    let l = two_l as f64 / 2.0;
    l * (l + 1.0)
}

/// Ladder coefficient for raising `m` (`dir = +1`) or lowering it
/// (`dir = -1`): `sqrt(S(S+1) - m(m + dir))`.
fn ladder(s_s1: f64, two_m: i32, dir: i32) -> f64 {
    let m = two_m as f64 / 2.0;
    (s_s1 - m * (m + dir as f64)).max(0.0).sqrt()
}

/// Upper-triangle matrix elements of
/// `L^2 = L_z^2 + sum_i [S(S+1) - m_i^2] + sum_{i != j} l+^(i) l-^(j)`
/// on the sector basis, with the sector dimension.
pub fn l2_upper_entries(sys: &SpinSystem) -> (usize, Vec<(usize, usize, f64)>) {
    let basis = sys.basis();
    let dim = basis.len();
    let index: HashMap<&[i32], usize> = basis
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_slice(), i))
        .collect();
    let s_s1 = sys.s_s1();
    let mz = sys.two_mz as f64 / 2.0;
    let two_s = sys.two_s as i32;

    let mut entries = Vec::new();
    let mut neighbour = vec![0; sys.n_spins];
    for (row, config) in basis.iter().enumerate() {
        let single: f64 = config
            .iter()
            .map(|&tm| {
                let m = tm as f64 / 2.0;
                s_s1 - m * m
            })
            .sum();
        entries.push((row, row, mz * mz + single));

        // l+ on spin i, l- on spin j
        for i in 0..sys.n_spins {
            if config[i] == two_s {
                continue;
            }
            for j in 0..sys.n_spins {
                if i == j || config[j] == -two_s {
                    continue;
                }
                neighbour.copy_from_slice(config);
                neighbour[i] += 2;
                neighbour[j] -= 2;
                let col = index[neighbour.as_slice()];
                if col > row {
                    let value = ladder(s_s1, config[i], 1) * ladder(s_s1, config[j], -1);
                    entries.push((row, col, value));
                }
            }
        }
    }
    (dim, entries)
}

/// Sparse `L^2` on the sector, stored with symmetric closure.
pub fn build_l2_operator(sys: &SpinSystem) -> Result<HermitianOperator, Su2Error> {
    let (dim, entries) = l2_upper_entries(sys);
    Ok(HermitianOperator::sparse_from_upper(dim, &entries)?)
}

/// Known spectrum of `L^2` in the sector together with the doubled `l` of
/// each distinct level.
#[derive(Clone, Debug)]
pub struct Su2Spectrum {
    pub spectrum: Spectrum,
    pub two_ls: Vec<u32>,
}

impl Su2Spectrum {
    pub fn level_index(&self, two_l: u32) -> Option<usize> {
        self.two_ls.iter().position(|&x| x == two_l)
    }
}

pub fn exact_spectrum(sys: &SpinSystem) -> Result<Su2Spectrum, Su2Error> {
    let levels = sys.levels();
    let pairs: Vec<(f64, usize)> = levels
        .iter()
        .map(|&(two_l, m)| (l_eigenvalue(two_l), m as usize))
        .collect();
    let spectrum = Spectrum::from_levels(&pairs, DEFAULT_MULTIPLICITY_TOLERANCE)?;
    Ok(Su2Spectrum {
        spectrum,
        two_ls: levels.iter().map(|l| l.0).collect(),
    })
}

/// Vectors spanning one degenerate level, all produced by a single
/// controlled shift sequence.
#[derive(Clone, Debug)]
pub struct DegenerateBasis {
    pub vectors: Vec<StateVector>,
    /// The stabilized run that produced the shared sequence.
    pub master: RunResult,
    /// Replay runs, one per returned vector.
    pub replays: Vec<RunResult>,
    pub min_gram_eigenvalue: f64,
}

/// Smallest eigenvalue of the Gram matrix of `vectors`.
pub fn min_gram_eigenvalue(vectors: &[StateVector]) -> Result<f64, Su2Error> {
    let d = vectors.len();
    if d == 0 {
        return Ok(0.0);
    }
    if d == 1 {
        return Ok(dot(&vectors[0], &vectors[0]));
    }
    let mut gram = DenseMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let g = dot(&vectors[i], &vectors[j]);
            gram.set(i, j, g);
            gram.set(j, i, g);
        }
    }
    Ok(jacobi_eigen(&gram)?.values[0])
}

/// Modified Gram-Schmidt, in place.
pub fn orthonormalize(vectors: &mut [StateVector]) -> Result<(), LaError> {
    for i in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(i);
        let mut v = rest[0].to_vec();
        for e in done.iter() {
            let c = dot(e, &v);
            for (x, y) in v.iter_mut().zip(e.iter()) {
                *x -= c * y;
            }
        }
        rest[0] = StateVector::new(v)?;
    }
    Ok(())
}

const GRAM_RANK_THRESHOLD: f64 = 1e-6;
const RANK_RETRIES: u64 = 3;

/// Basis of the level `level` (a distinct-level index of `spectrum`) with
/// `d_l` vectors.
///
/// One stabilized run from `config.rng_seed` records a shift sequence; that
/// same sequence is then replayed on `d_l` random starts. If the replayed
/// set is numerically dependent the starts are redrawn, up to three times.
pub fn extract_degenerate_basis(
    op: &HermitianOperator,
    spectrum: &Spectrum,
    level: usize,
    d_l: usize,
    config: &RunConfig,
    orthonormalize_output: bool,
) -> Result<DegenerateBasis, Su2Error> {
    let multiplicity =
        spectrum
            .multiplicities()
            .get(level)
            .copied()
            .ok_or(RichardsonError::BadTarget {
                target: level,
                levels: spectrum.n_distinct(),
            })?;
    if d_l != multiplicity {
        return Err(Su2Error::WrongMultiplicity {
            requested: d_l,
            multiplicity,
        });
    }
    let master = run_stabilized(op, spectrum, level, config, Reference::None)?;

    let mut last_min = 0.0;
    for attempt in 0..=RANK_RETRIES {
        let mut rng = SeededRng::new(config.rng_seed ^ (0x5eed_0000 + attempt));
        let mut replays = Vec::with_capacity(d_l);
        for _ in 0..d_l {
            let v0 = StateVector::new(rng.symmetric_vec(op.dim()))?;
            let replay_config = RunConfig {
                rng_seed: rng.next_u64(),
                ..config.clone()
            };
            replays.push(replay_sequence(
                op,
                spectrum,
                level,
                &master.shift_history,
                v0,
                &replay_config,
                Reference::None,
            )?);
        }
        let mut vectors: Vec<StateVector> =
            replays.iter().map(|r| r.final_vector.clone()).collect();
        last_min = min_gram_eigenvalue(&vectors)?;
        if last_min > GRAM_RANK_THRESHOLD {
            if orthonormalize_output {
                orthonormalize(&mut vectors)?;
            }
            return Ok(DegenerateBasis {
                vectors,
                master,
                replays,
                min_gram_eigenvalue: last_min,
            });
        }
    }
    Err(Su2Error::RankDeficient(last_min))
}
