//! Richardson purification: the naive periodic product and the stabilized
//! variant whose shift order is chosen on the fly from a weight array.
//!
//! Each step applies `H - e_j` for one known eigenvalue `e_j` and
//! renormalizes. The stabilized controller keeps one weight per distinct
//! eigenvalue other than the target, always eliminates the largest, resets
//! it to `delta_bar / delta`, and multiplies every other weight by
//! `|e_i - e_j| / delta`. Weights are stored as natural logarithms since the
//! products overflow a double within a few hundred steps on wide spectra.

use std::fmt::Write as _;

use thiserror::Error;

use crate::diagnostics::{sigma_error, sigma_subspace, DiagnosticsError};
use crate::eigensolve::Spectrum;
use crate::la::{HermitianOperator, LaError, StateVector};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum RichardsonError {
    #[error("target level {target} out of range for {levels} distinct levels")]
    BadTarget { target: usize, levels: usize },
    #[error("delta_bar {delta_bar:e} must be positive and below the smallest spacing {delta:e}")]
    DeltaBarTooLarge { delta_bar: f64, delta: f64 },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("shift schedule must list every non-target level exactly once")]
    BadPermutation,
    #[error("spectrum has {spectrum} eigenvalues but the operator has dimension {operator}")]
    DimensionMismatch { spectrum: usize, operator: usize },
    #[error("iterate annihilated {0} times; giving up")]
    RepeatedAnnihilation(usize),
    #[error("not converged after {} iterations (best sigma_bar {:e})", .0.iterations_used, .0.best_sigma_bar)]
    NotConverged(Box<RunResult>),
    #[error(transparent)]
    La(#[from] LaError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Number of fresh random restarts allowed when an iterate is annihilated.
pub const MAX_RESTARTS: usize = 3;

/// Common divisor applied to the surviving weights at each update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeightScale {
    /// Divide by the smallest level spacing `delta`.
    #[default]
    SmallestSpacing,
    /// Divide by `|e_k - e_j|`, so that the weights follow the amplitude
    /// ratios against the target between eliminations.
    TargetGap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub delta_bar: f64,
    pub sigma_bar_target: f64,
    /// `None` means `50 * n_distinct`.
    pub max_iterations: Option<usize>,
    pub refresh_threshold: f64,
    /// Iterations between refreshes once armed; `0` disables refreshing.
    pub refresh_period: usize,
    pub rng_seed: u64,
    pub weight_scale: WeightScale,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            delta_bar: 1e-10,
            sigma_bar_target: 1e-10,
            max_iterations: None,
            refresh_threshold: 1e-5,
            refresh_period: 50,
            rng_seed: 0,
            weight_scale: WeightScale::SmallestSpacing,
        }
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn iteration_budget(&self, spectrum: &Spectrum) -> usize {
        self.max_iterations.unwrap_or(50 * spectrum.n_distinct())
    }

    fn validate(&self) -> Result<(), RichardsonError> {
        if !(self.delta_bar > 0.0) {
            return Err(RichardsonError::InvalidConfig("delta_bar must be positive"));
        }
        if !(self.sigma_bar_target >= f64::EPSILON) {
            return Err(RichardsonError::InvalidConfig(
                "sigma_bar_target must be at least machine epsilon",
            ));
        }
        if !(self.refresh_threshold > 0.0) {
            return Err(RichardsonError::InvalidConfig(
                "refresh_threshold must be positive",
            ));
        }
        if self.max_iterations == Some(0) {
            return Err(RichardsonError::InvalidConfig(
                "max_iterations must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub j: usize,
    pub sigma_bar: f64,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub const CSV_HEADER: &'static str = "n,j,sigma_bar,sigma";

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sigma_bars(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sigma_bar).collect()
    }

    /// CSV with header `n,j,sigma_bar,sigma`; empty `sigma` column when no
    /// reference was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * (self.rows.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{:.16e},", r.n, r.j, r.sigma_bar);
            if let Some(s) = r.sigma {
                let _ = write!(out, "{s:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Where the optional `sigma` column of a trace comes from.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    None,
    Vector(&'a [f64]),
    Subspace(&'a [StateVector]),
}

impl Reference<'_> {
    fn sigma(&self, v: &[f64]) -> Result<Option<f64>, RichardsonError> {
        Ok(match self {
            Reference::None => None,
            Reference::Vector(r) => Some(sigma_error(v, r)?),
            Reference::Subspace(basis) => Some(sigma_subspace(v, basis)?),
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Last iterate when converged, lowest-`sigma_bar` iterate otherwise.
    pub final_vector: StateVector,
    pub iterations_used: usize,
    pub converged: bool,
    pub best_sigma_bar: f64,
    pub trace: IterationTrace,
    /// Distinct-level index applied at each iteration.
    pub shift_history: Vec<usize>,
    pub counts: Vec<usize>,
    pub restarts: usize,
}

impl RunResult {
    pub fn final_sigma_bar(&self) -> Option<f64> {
        self.trace.rows.last().map(|r| r.sigma_bar)
    }
}

/// Weight array, shift bookkeeping and iteration counter of a stabilized
/// run.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    log_weights: Vec<f64>,
    target: usize,
    delta_bar: f64,
    delta: f64,
    scale: WeightScale,
    shift_history: Vec<usize>,
    counts: Vec<usize>,
    iteration: usize,
}

impl ControllerState {
    /// Controller with explicit linear weights; `weights[k]` is ignored.
    pub fn with_weights(
        spectrum: &Spectrum,
        target: usize,
        delta_bar: f64,
        weights: &[f64],
    ) -> Result<Self, RichardsonError> {
        let levels = spectrum.n_distinct();
        check_target(target, levels)?;
        if weights.len() != levels {
            return Err(LaError::DimensionMismatch {
                expected: levels,
                found: weights.len(),
            }
            .into());
        }
        if !(delta_bar > 0.0 && delta_bar < spectrum.delta()) {
            return Err(RichardsonError::DeltaBarTooLarge {
                delta_bar,
                delta: spectrum.delta(),
            });
        }
        let log_weights = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                if i == target {
                    f64::NEG_INFINITY
                } else {
                    w.ln()
                }
            })
            .collect();
        Ok(Self {
            log_weights,
            target,
            delta_bar,
            delta: spectrum.delta(),
            scale: WeightScale::SmallestSpacing,
            shift_history: Vec::new(),
            counts: vec![0; levels],
            iteration: 0,
        })
    }

    pub fn with_scale(mut self, scale: WeightScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn shift_history(&self) -> &[usize] {
        &self.shift_history
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn log_weight(&self, i: usize) -> Option<f64> {
        (i != self.target).then(|| self.log_weights[i])
    }

    pub fn weight(&self, i: usize) -> Option<f64> {
        self.log_weight(i).map(f64::exp)
    }

    pub fn n_levels(&self) -> usize {
        self.log_weights.len()
    }

    fn record(&mut self, j: usize) {
        self.shift_history.push(j);
        self.counts[j] += 1;
        self.iteration += 1;
    }
}

fn check_target(target: usize, levels: usize) -> Result<(), RichardsonError> {
    if target >= levels {
        Err(RichardsonError::BadTarget { target, levels })
    } else {
        Ok(())
    }
}

fn check_dims(op: &HermitianOperator, spectrum: &Spectrum) -> Result<(), RichardsonError> {
    if op.dim() != spectrum.dim() {
        return Err(RichardsonError::DimensionMismatch {
            spectrum: spectrum.dim(),
            operator: op.dim(),
        });
    }
    Ok(())
}

/// Draws the initial iterate (i.i.d. uniform on `[-1, 1)`, normalized) and
/// then the weights (i.i.d. uniform on `(0, 1)` for every level but the
/// target), in that order, from `rng`.
pub fn init_controller_with_rng(
    spectrum: &Spectrum,
    target: usize,
    config: &RunConfig,
    rng: &mut SeededRng,
) -> Result<(StateVector, ControllerState), RichardsonError> {
    config.validate()?;
    check_target(target, spectrum.n_distinct())?;
    let v = StateVector::new(rng.symmetric_vec(spectrum.dim()))?;
    let weights: Vec<f64> = (0..spectrum.n_distinct())
        .map(|i| if i == target { 1.0 } else { rng.open01() })
        .collect();
    let state = ControllerState::with_weights(spectrum, target, config.delta_bar, &weights)?
        .with_scale(config.weight_scale);
    Ok((v, state))
}

pub fn init_controller(
    spectrum: &Spectrum,
    target: usize,
    config: &RunConfig,
) -> Result<(StateVector, ControllerState), RichardsonError> {
    init_controller_with_rng(
        spectrum,
        target,
        config,
        &mut SeededRng::new(config.rng_seed),
    )
}

/// Level with the largest weight, excluding the target; ties go to the
/// smallest index.
pub fn select_shift(state: &ControllerState) -> usize {
    let mut best: Option<usize> = None;
    for (i, &w) in state.log_weights.iter().enumerate() {
        if i == state.target {
            continue;
        }
        match best {
            Some(b) if w <= state.log_weights[b] => {}
            _ => best = Some(i),
        }
    }
    best.expect("at least two distinct levels")
}

/// Records elimination of level `j`: its weight becomes `delta_bar / delta`
/// and every other non-target weight is multiplied by `|e_i - e_j| / delta`
/// (or by `|e_i - e_j| / |e_k - e_j|` under [`WeightScale::TargetGap`]).
pub fn update_weights(state: &mut ControllerState, j: usize, spectrum: &Spectrum) {
    let levels = spectrum.distinct();
    let ej = levels[j];
    let log_delta = state.delta.ln();
    let log_scale = match state.scale {
        WeightScale::SmallestSpacing => log_delta,
        WeightScale::TargetGap => (levels[state.target] - ej).abs().ln(),
    };
    for (i, lw) in state.log_weights.iter_mut().enumerate() {
        if i == state.target {
            continue;
        }
        if i == j {
            *lw = state.delta_bar.ln() - log_delta;
        } else {
            *lw += (levels[i] - ej).abs().ln() - log_scale;
        }
    }
    state.record(j);
}

/// Replaces every weight by its reciprocal and rescales so the largest is 1.
pub fn refresh_weights(state: &mut ControllerState) {
    let target = state.target;
    let mut max = f64::NEG_INFINITY;
    for (i, lw) in state.log_weights.iter_mut().enumerate() {
        if i != target {
            *lw = -*lw;
            max = max.max(*lw);
        }
    }
    for (i, lw) in state.log_weights.iter_mut().enumerate() {
        if i != target {
            *lw -= max;
        }
    }
}

/// One controlled step: pick the shift, apply it, update the weights.
///
/// On `ZeroVector` the state is left untouched.
pub fn step(
    op: &HermitianOperator,
    spectrum: &Spectrum,
    state: &mut ControllerState,
    v: &StateVector,
) -> Result<StateVector, RichardsonError> {
    let j = select_shift(state);
    let next = op.apply_shifted(spectrum.distinct()[j], v)?;
    update_weights(state, j, spectrum);
    Ok(next)
}

/// How the next shift is chosen.
trait ShiftPolicy {
    fn next(&mut self, n: usize) -> usize;
    fn commit(&mut self, j: usize, spectrum: &Spectrum);
    fn observe(&mut self, _n: usize, _sigma_bar: f64) {}
}

struct Stabilized<'a> {
    state: ControllerState,
    config: &'a RunConfig,
    last_refresh: Option<usize>,
}

impl ShiftPolicy for Stabilized<'_> {
    fn next(&mut self, _n: usize) -> usize {
        select_shift(&self.state)
    }

    fn commit(&mut self, j: usize, spectrum: &Spectrum) {
        update_weights(&mut self.state, j, spectrum);
    }

    fn observe(&mut self, n: usize, sigma_bar: f64) {
        let period = self.config.refresh_period;
        if period == 0 {
            return;
        }
        let due = match self.last_refresh {
            None => sigma_bar < self.config.refresh_threshold,
            Some(last) => n - last >= period,
        };
        if due {
            refresh_weights(&mut self.state);
            self.last_refresh = Some(n);
        }
    }
}

struct Sequence<'a> {
    order: &'a [usize],
}

impl ShiftPolicy for Sequence<'_> {
    fn next(&mut self, n: usize) -> usize {
        self.order[n % self.order.len()]
    }

    fn commit(&mut self, _j: usize, _spectrum: &Spectrum) {}
}

struct Driver<'a> {
    op: &'a HermitianOperator,
    spectrum: &'a Spectrum,
    target: usize,
    sigma_bar_target: f64,
    budget: usize,
    reference: Reference<'a>,
}

impl Driver<'_> {
    fn run(
        &self,
        policy: &mut dyn ShiftPolicy,
        mut v: StateVector,
        rng: &mut SeededRng,
    ) -> Result<RunResult, RichardsonError> {
        let levels = self.spectrum.distinct();
        let eps_k = levels[self.target];
        let mut trace = IterationTrace::default();
        let mut history = Vec::new();
        let mut counts = vec![0; levels.len()];
        let mut restarts = 0;
        let mut best = (f64::INFINITY, v.clone());
        let mut buffer = vec![0.0; self.op.dim()];

        for n in 0..self.budget {
            let j = policy.next(n);
            debug_assert_ne!(j, self.target);
            self.op.shifted_matvec_into(levels[j], &v, &mut buffer)?;
            v = match StateVector::new(buffer.clone()) {
                Ok(next) => next,
                Err(LaError::ZeroVector) => {
                    restarts += 1;
                    if restarts > MAX_RESTARTS {
                        return Err(RichardsonError::RepeatedAnnihilation(restarts));
                    }
                    StateVector::new(rng.symmetric_vec(self.op.dim()))?
                }
                Err(e) => return Err(e.into()),
            };
            policy.commit(j, self.spectrum);
            history.push(j);
            counts[j] += 1;

            let sigma_bar = self.op.residual_sigma_bar(eps_k, &v)?;
            trace.rows.push(TraceRow {
                n,
                j,
                sigma_bar,
                sigma: self.reference.sigma(&v)?,
            });
            if sigma_bar < best.0 {
                best = (sigma_bar, v.clone());
            }
            if sigma_bar <= self.sigma_bar_target {
                return Ok(RunResult {
                    final_vector: v,
                    iterations_used: n + 1,
                    converged: true,
                    best_sigma_bar: sigma_bar,
                    trace,
                    shift_history: history,
                    counts,
                    restarts,
                });
            }
            policy.observe(n, sigma_bar);
        }

        Err(RichardsonError::NotConverged(Box::new(RunResult {
            final_vector: best.1,
            iterations_used: self.budget,
            converged: false,
            best_sigma_bar: best.0,
            trace,
            shift_history: history,
            counts,
            restarts,
        })))
    }
}

/// Stabilized purification of the eigenvector for distinct level `target`.
///
/// Loops until `sigma_bar <= config.sigma_bar_target` or the iteration
/// budget runs out, refreshing the weights every `refresh_period`
/// iterations once `sigma_bar` first drops below `refresh_threshold`.
pub fn run_stabilized(
    op: &HermitianOperator,
    spectrum: &Spectrum,
    target: usize,
    config: &RunConfig,
    reference: Reference<'_>,
) -> Result<RunResult, RichardsonError> {
    check_dims(op, spectrum)?;
    let mut rng = SeededRng::new(config.rng_seed);
    let (v, state) = init_controller_with_rng(spectrum, target, config, &mut rng)?;
    let mut policy = Stabilized {
        state,
        config,
        last_refresh: None,
    };
    driver(op, spectrum, target, config, reference).run(&mut policy, v, &mut rng)
}

fn driver<'a>(
    op: &'a HermitianOperator,
    spectrum: &'a Spectrum,
    target: usize,
    config: &RunConfig,
    reference: Reference<'a>,
) -> Driver<'a> {
    Driver {
        op,
        spectrum,
        target,
        sigma_bar_target: config.sigma_bar_target,
        budget: config.iteration_budget(spectrum),
        reference,
    }
}

fn check_permutation(
    permutation: &[usize],
    target: usize,
    levels: usize,
) -> Result<(), RichardsonError> {
    let mut seen = vec![false; levels];
    for &j in permutation {
        if j >= levels || j == target || seen[j] {
            return Err(RichardsonError::BadPermutation);
        }
        seen[j] = true;
    }
    if permutation.len() + 1 != levels {
        return Err(RichardsonError::BadPermutation);
    }
    Ok(())
}

/// Random ordering of every level except `target`, drawn from `seed`.
pub fn random_permutation(levels: usize, target: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..levels).filter(|&i| i != target).collect();
    SeededRng::new(seed).shuffle(&mut order);
    order
}

/// Naive purification: shifts are applied cyclically in the fixed order
/// `permutation`. The initial vector is the same one `run_stabilized` draws
/// for the same seed.
pub fn run_naive(
    op: &HermitianOperator,
    spectrum: &Spectrum,
    target: usize,
    permutation: &[usize],
    config: &RunConfig,
    reference: Reference<'_>,
) -> Result<RunResult, RichardsonError> {
    check_dims(op, spectrum)?;
    check_permutation(permutation, target, spectrum.n_distinct())?;
    let mut rng = SeededRng::new(config.rng_seed);
    let (v, _) = init_controller_with_rng(spectrum, target, config, &mut rng)?;
    let mut policy = Sequence { order: permutation };
    driver(op, spectrum, target, config, reference).run(&mut policy, v, &mut rng)
}

/// Applies a recorded shift sequence to `v0`, cycling through it until
/// convergence or the budget in `config` runs out. Used to reuse one
/// controlled sequence for many starting vectors.
pub fn replay_sequence(
    op: &HermitianOperator,
    spectrum: &Spectrum,
    target: usize,
    sequence: &[usize],
    v0: StateVector,
    config: &RunConfig,
    reference: Reference<'_>,
) -> Result<RunResult, RichardsonError> {
    check_dims(op, spectrum)?;
    check_target(target, spectrum.n_distinct())?;
    config.validate()?;
    if sequence.is_empty()
        || sequence
            .iter()
            .any(|&j| j == target || j >= spectrum.n_distinct())
    {
        return Err(RichardsonError::BadPermutation);
    }
    let mut rng = SeededRng::new(config.rng_seed);
    let mut policy = Sequence { order: sequence };
    driver(op, spectrum, target, config, reference).run(&mut policy, v0, &mut rng)
}
