use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::time::Instant;

use purify_core::diagnostics::{convergence_ratios, lyapunov_estimate};
use purify_core::eigensolve::{
    generate_random_tridiagonal, ql_eigenvalues, spectrum_stats, Spectrum,
    DEFAULT_MULTIPLICITY_TOLERANCE, DEFAULT_QL_SWEEPS,
};
use purify_core::io::{self, fmt_f64};
use purify_core::la::{HermitianOperator, StateVector};
use purify_core::richardson::{
    init_controller, random_permutation, run_naive, run_stabilized, Reference, RichardsonError,
    RunConfig, RunResult,
};
use purify_core::su2::{self, SpinSystem};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::manifest::{ExperimentKind, ExperimentManifest, LyapunovParams};

/// Environment variable capping how many runs execute at once.
pub const THREADS_ENV: &str = "PURIFY_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Manifest,
    Generate,
    Eigensolve,
    Write,
    Read,
    Purify,
    Diagnostics,
    Su2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Manifest => "manifest",
            Stage::Generate => "generate",
            Stage::Eigensolve => "eigensolve",
            Stage::Write => "write",
            Stage::Read => "read",
            Stage::Purify => "purify",
            Stage::Diagnostics => "diagnostics",
            Stage::Su2 => "su2",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(stage, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaiveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub best_sigma_bar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub target: usize,
    pub eigenvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_sigma_bar: f64,
    pub best_sigma_bar: f64,
    pub max_log10_r: f64,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive: Option<NaiveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Su2Summary {
    pub l: f64,
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub vectors: usize,
    pub min_gram_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub experiment: ExperimentKind,
    pub converged: bool,
    pub dimension: usize,
    pub n_distinct: usize,
    pub smallest_spacing: f64,
    pub band_width: f64,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub su2: Option<Su2Summary>,
    pub wall_time_s: f64,
}

impl ExperimentSummary {
    /// 0 when every purification converged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            1
        }
    }
}

/// Nonzero exit code for a failed stage.
pub const ERROR_EXIT_CODE: i32 = 2;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::new(Stage::Write, format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::new(Stage::Read, format!("{}: {e}", path.display())))
}

/// Writes the operator and its spectrum, then parses both back so every
/// pipeline works from the file contents.
fn round_trip(
    dir: &Path,
    matrix_text: String,
    eigenvalues: &[f64],
) -> Result<(HermitianOperator, Spectrum), CliError> {
    let matrix_path = dir.join("matrix.txt");
    let eigs_path = dir.join("eigs.txt");
    write_file(&matrix_path, &matrix_text)?;
    write_file(&eigs_path, &io::write_eigenvalues(eigenvalues))?;
    let op = io::read_matrix(&read_file(&matrix_path)?)
        .at(Stage::Read)?
        .into_operator()
        .at(Stage::Read)?;
    let eigs = io::read_eigenvalues(&read_file(&eigs_path)?).at(Stage::Read)?;
    let spectrum = spectrum_stats(&eigs, DEFAULT_MULTIPLICITY_TOLERANCE).at(Stage::Eigensolve)?;
    if spectrum.dim() != op.dim() {
        return Err(CliError::new(
            Stage::Read,
            format!(
                "{} eigenvalues for a {}-dimensional operator",
                spectrum.dim(),
                op.dim()
            ),
        ));
    }
    Ok((op, spectrum))
}

fn unpack(result: Result<RunResult, RichardsonError>) -> Result<RunResult, CliError> {
    match result {
        Ok(r) => Ok(r),
        Err(RichardsonError::NotConverged(r)) => Ok(*r),
        Err(e) => Err(CliError::new(Stage::Purify, e)),
    }
}

fn ratios_csv(log_r: &[f64], counts: &[usize]) -> String {
    let mut out = String::from("i,log10_r,m_i\n");
    for (i, (r, m)) in log_r.iter().zip(counts).enumerate() {
        let _ = writeln!(out, "{i},{},{m}", fmt_f64(*r));
    }
    out
}

fn lyapunov_csv(trace: &purify_core::diagnostics::LyapunovTrace) -> String {
    let mut out = String::from("n,zeta,lambda\n");
    for r in &trace.rows {
        let _ = writeln!(out, "{},{},{}", r.n, fmt_f64(r.zeta), fmt_f64(r.lambda));
    }
    out
}

fn max_off_target(log_r: &[f64], target: usize) -> f64 {
    log_r
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Context<'a> {
    op: &'a HermitianOperator,
    spectrum: &'a Spectrum,
    manifest: &'a ExperimentManifest,
    config: RunConfig,
}

impl Context<'_> {
    fn naive_order(&self, target: usize) -> Vec<usize> {
        random_permutation(self.spectrum.n_distinct(), target, self.config.rng_seed)
    }

    /// Stabilized run (plus baseline when requested) for one target, with
    /// artifacts under `k<target>/`.
    fn purify(&self, target: usize) -> Result<RunSummary, CliError> {
        let dir = self.manifest.out.join(format!("k{target}"));
        fs::create_dir_all(&dir).at(Stage::Write)?;
        let first = unpack(run_stabilized(
            self.op,
            self.spectrum,
            target,
            &self.config,
            Reference::None,
        ))?;
        // same trajectory again, now measured against its own limit
        let stabilized = if first.converged {
            let reference = first.final_vector.clone();
            unpack(run_stabilized(
                self.op,
                self.spectrum,
                target,
                &self.config,
                Reference::Vector(&reference),
            ))?
        } else {
            first
        };
        write_file(
            &dir.join("trace_stabilized.csv"),
            &stabilized.trace.to_csv(),
        )?;
        write_file(
            &dir.join("vector.txt"),
            &io::write_vector(&stabilized.final_vector),
        )?;

        let log_r = convergence_ratios(
            self.spectrum,
            target,
            &stabilized.counts,
            self.config.delta_bar,
            1.0,
        )
        .at(Stage::Diagnostics)?;
        write_file(
            &dir.join("ratios.csv"),
            &ratios_csv(&log_r, &stabilized.counts),
        )?;

        let naive = if self.manifest.baseline {
            let reference = stabilized
                .converged
                .then(|| stabilized.final_vector.clone());
            let r = unpack(run_naive(
                self.op,
                self.spectrum,
                target,
                &self.naive_order(target),
                &self.config,
                reference
                    .as_deref()
                    .map_or(Reference::None, Reference::Vector),
            ))?;
            write_file(&dir.join("trace_naive.csv"), &r.trace.to_csv())?;
            Some(NaiveSummary {
                converged: r.converged,
                iterations: r.iterations_used,
                best_sigma_bar: r.best_sigma_bar,
            })
        } else {
            None
        };

        let summary = RunSummary {
            target,
            eigenvalue: self.spectrum.distinct()[target],
            converged: stabilized.converged,
            iterations: stabilized.iterations_used,
            final_sigma_bar: stabilized.final_sigma_bar().unwrap_or(f64::NAN),
            best_sigma_bar: stabilized.best_sigma_bar,
            max_log10_r: max_off_target(&log_r, target),
            restarts: stabilized.restarts,
            naive,
            lyapunov_lambda: None,
        };
        write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
        Ok(summary)
    }

    /// Two-trajectory estimate under the naive periodic sequence for `target`.
    fn lyapunov(&self, target: usize, params: &LyapunovParams) -> Result<RunSummary, CliError> {
        let dir = self.manifest.out.join(format!("k{target}"));
        fs::create_dir_all(&dir).at(Stage::Write)?;
        let (v0, _) = init_controller(self.spectrum, target, &self.config).at(Stage::Purify)?;
        let levels = self.spectrum.distinct();
        let shifts: Vec<f64> = self
            .naive_order(target)
            .iter()
            .map(|&j| levels[j])
            .collect();
        let trace = lyapunov_estimate(
            self.op,
            &shifts,
            &v0,
            params.initial_offset,
            params.steps,
            params.renorm_interval,
            self.config.rng_seed,
        )
        .at(Stage::Diagnostics)?;
        write_file(&dir.join("lyapunov.csv"), &lyapunov_csv(&trace))?;
        let summary = RunSummary {
            target,
            eigenvalue: levels[target],
            converged: true,
            iterations: params.steps,
            final_sigma_bar: f64::NAN,
            best_sigma_bar: f64::NAN,
            max_log10_r: f64::NAN,
            restarts: 0,
            naive: None,
            lyapunov_lambda: trace.final_lambda(),
        };
        write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
        Ok(summary)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).at(Stage::Write)?;
    s.push('\n');
    Ok(s)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::new(
                Stage::Manifest,
                format!("{THREADS_ENV} must be a positive integer, got {raw:?}"),
            )
        })?;
        builder = builder.num_threads(n);
    }
    builder.build().at(Stage::Manifest)
}

fn check_targets(targets: &[usize], spectrum: &Spectrum) -> Result<Vec<usize>, CliError> {
    let targets = if targets.is_empty() {
        vec![0]
    } else {
        targets.to_vec()
    };
    for &k in &targets {
        if k >= spectrum.n_distinct() {
            return Err(CliError::new(
                Stage::Manifest,
                format!(
                    "target {k} out of range for {} distinct levels",
                    spectrum.n_distinct()
                ),
            ));
        }
    }
    let mut seen = targets.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != targets.len() {
        return Err(CliError::new(Stage::Manifest, "duplicate target index"));
    }
    Ok(targets)
}

fn tridiagonal_inputs(
    manifest: &ExperimentManifest,
) -> Result<(HermitianOperator, Spectrum), CliError> {
    let params = manifest.matrix.as_ref().ok_or_else(|| {
        CliError::new(Stage::Manifest, "matrix parameters (n, seed) are required")
    })?;
    if params.n < 2 {
        return Err(CliError::new(
            Stage::Generate,
            "matrix dimension must be at least 2",
        ));
    }
    let t = generate_random_tridiagonal(params.n, params.seed);
    let eigs = ql_eigenvalues(&t, DEFAULT_QL_SWEEPS).at(Stage::Eigensolve)?;
    round_trip(&manifest.out, io::write_tridiagonal(&t), &eigs)
}

fn su2_run(
    manifest: &ExperimentManifest,
    config: &RunConfig,
) -> Result<(ExperimentSummary, Vec<RunSummary>), CliError> {
    let spin = manifest
        .spin
        .as_ref()
        .ok_or_else(|| CliError::new(Stage::Manifest, "spin parameters are required"))?;
    let sys = SpinSystem::new(spin.spins, spin.two_s, spin.two_mz).at(Stage::Su2)?;
    let exact = su2::exact_spectrum(&sys).at(Stage::Su2)?;
    let built = su2::build_l2_operator(&sys).at(Stage::Su2)?;
    let matrix_text = io::write_operator(&built).at(Stage::Write)?;
    let (op, spectrum) = round_trip(&manifest.out, matrix_text, &exact.spectrum.eigenvalues())?;

    let eigenvalue = su2::l_eigenvalue(spin.two_l);
    let level = spectrum.level_of(eigenvalue).ok_or_else(|| {
        CliError::new(
            Stage::Su2,
            format!(
                "l = {} does not occur in this sector",
                spin.two_l as f64 / 2.0
            ),
        )
    })?;
    let multiplicity = spectrum.multiplicities()[level];
    let basis = su2::extract_degenerate_basis(
        &op,
        &spectrum,
        level,
        multiplicity,
        config,
        spin.orthonormalize,
    )
    .at(Stage::Su2)?;

    let mut reference = basis.vectors.clone();
    su2::orthonormalize(&mut reference).at(Stage::Su2)?;
    let master = unpack(run_stabilized(
        &op,
        &spectrum,
        level,
        config,
        Reference::Subspace(&reference),
    ))?;
    write_file(
        &manifest.out.join("trace_master.csv"),
        &master.trace.to_csv(),
    )?;
    for (i, (v, replay)) in basis.vectors.iter().zip(&basis.replays).enumerate() {
        write_file(
            &manifest.out.join(format!("basis_{i}.txt")),
            &io::write_vector(v),
        )?;
        write_file(
            &manifest.out.join(format!("trace_replay_{i}.csv")),
            &replay.trace.to_csv(),
        )?;
    }
    let log_r = convergence_ratios(&spectrum, level, &master.counts, config.delta_bar, 1.0)
        .at(Stage::Diagnostics)?;
    write_file(
        &manifest.out.join("ratios.csv"),
        &ratios_csv(&log_r, &master.counts),
    )?;

    let converged = master.converged && basis.replays.iter().all(|r| r.converged);
    let run = RunSummary {
        target: level,
        eigenvalue,
        converged,
        iterations: master.iterations_used,
        final_sigma_bar: master.final_sigma_bar().unwrap_or(f64::NAN),
        best_sigma_bar: master.best_sigma_bar,
        max_log10_r: max_off_target(&log_r, level),
        restarts: master.restarts,
        naive: None,
        lyapunov_lambda: None,
    };
    let summary = ExperimentSummary {
        experiment: manifest.experiment,
        converged,
        dimension: spectrum.dim(),
        n_distinct: spectrum.n_distinct(),
        smallest_spacing: spectrum.delta(),
        band_width: spectrum.band_width(),
        runs: Vec::new(),
        su2: Some(Su2Summary {
            l: spin.two_l as f64 / 2.0,
            eigenvalue,
            multiplicity,
            vectors: basis.vectors.len(),
            min_gram_eigenvalue: basis.min_gram_eigenvalue,
        }),
        wall_time_s: 0.0,
    };
    Ok((summary, vec![run]))
}

/// Runs one experiment, writing every artifact under `manifest.out`.
///
/// Non-convergence is not an error: the summary records it and
/// [`ExperimentSummary::exit_code`] turns it into a nonzero status.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentSummary, CliError> {
    let start = Instant::now();
    fs::create_dir_all(&manifest.out)
        .map_err(|e| CliError::new(Stage::Write, format!("{}: {e}", manifest.out.display())))?;
    write_file(&manifest.out.join("manifest.json"), &to_json(manifest)?)?;
    let config = manifest.run.to_config();

    let mut summary = match manifest.experiment {
        ExperimentKind::Su2 => {
            let (mut summary, runs) = su2_run(manifest, &config)?;
            summary.runs = runs;
            summary
        }
        kind @ (ExperimentKind::Tridiag | ExperimentKind::Lyapunov) => {
            let (op, spectrum) = tridiagonal_inputs(manifest)?;
            let targets = check_targets(&manifest.targets, &spectrum)?;
            let ctx = Context {
                op: &op,
                spectrum: &spectrum,
                manifest,
                config,
            };
            let runs: Vec<RunSummary> = thread_pool()?.install(|| {
                targets
                    .par_iter()
                    .map(|&k| match kind {
                        ExperimentKind::Lyapunov => ctx.lyapunov(k, &manifest.lyapunov),
                        _ => ctx.purify(k),
                    })
                    .collect::<Result<_, _>>()
            })?;
            ExperimentSummary {
                experiment: kind,
                converged: runs.iter().all(|r| r.converged),
                dimension: spectrum.dim(),
                n_distinct: spectrum.n_distinct(),
                smallest_spacing: spectrum.delta(),
                band_width: spectrum.band_width(),
                runs,
                su2: None,
                wall_time_s: 0.0,
            }
        }
    };
    summary.wall_time_s = start.elapsed().as_secs_f64();
    write_file(&manifest.out.join("summary.json"), &to_json(&summary)?)?;
    Ok(summary)
}

/// Reads a vector artifact back.
pub fn read_vector_file(path: &Path) -> Result<StateVector, CliError> {
    let values = io::read_vector(&read_file(path)?).at(Stage::Read)?;
    StateVector::new(values).at(Stage::Read)
}
