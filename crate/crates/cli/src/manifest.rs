use std::path::PathBuf;

use purify_core::richardson::{RunConfig, WeightScale};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Tridiag,
    Su2,
    Lyapunov,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    SmallestSpacing,
    TargetGap,
}

impl From<Scale> for WeightScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::SmallestSpacing => WeightScale::SmallestSpacing,
            Scale::TargetGap => WeightScale::TargetGap,
        }
    }
}

/// Controller settings as written to `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub delta_bar: f64,
    pub sigma_bar_target: f64,
    pub max_iterations: Option<usize>,
    pub refresh_threshold: f64,
    pub refresh_period: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub weight_scale: Scale,
}

impl RunSettings {
    pub fn with_seed(rng_seed: u64) -> Self {
        let d = RunConfig::default();
        Self {
            delta_bar: d.delta_bar,
            sigma_bar_target: d.sigma_bar_target,
            max_iterations: d.max_iterations,
            refresh_threshold: d.refresh_threshold,
            refresh_period: d.refresh_period,
            rng_seed,
            weight_scale: Scale::SmallestSpacing,
        }
    }

    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            delta_bar: self.delta_bar,
            sigma_bar_target: self.sigma_bar_target,
            max_iterations: self.max_iterations,
            refresh_threshold: self.refresh_threshold,
            refresh_period: self.refresh_period,
            rng_seed: self.rng_seed,
            weight_scale: self.weight_scale.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixParams {
    pub n: usize,
    pub seed: u64,
}

/// Spin quantum numbers are stored doubled so half-integers stay exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    pub spins: usize,
    pub two_s: u32,
    pub two_mz: i32,
    pub two_l: u32,
    #[serde(default)]
    pub orthonormalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub steps: usize,
    pub initial_offset: f64,
    pub renorm_interval: usize,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            steps: 5000,
            initial_offset: 1e-12,
            renorm_interval: purify_core::diagnostics::DEFAULT_RENORM_INTERVAL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: ExperimentKind,
    pub run: RunSettings,
    /// Required for `tridiag` and `lyapunov`.
    #[serde(default)]
    pub matrix: Option<MatrixParams>,
    /// Required for `su2`.
    #[serde(default)]
    pub spin: Option<SpinParams>,
    #[serde(default)]
    pub lyapunov: LyapunovParams,
    /// Distinct-level indices to purify (`tridiag`, `lyapunov`).
    #[serde(default)]
    pub targets: Vec<usize>,
    /// Also run the naive periodic baseline.
    #[serde(default)]
    pub baseline: bool,
    pub out: PathBuf,
}

impl ExperimentManifest {
    pub fn tridiag(n: usize, seed: u64, targets: Vec<usize>, out: impl Into<PathBuf>) -> Self {
        Self {
            experiment: ExperimentKind::Tridiag,
            run: RunSettings::with_seed(seed),
            matrix: Some(MatrixParams { n, seed }),
            spin: None,
            lyapunov: LyapunovParams::default(),
            targets,
            baseline: false,
            out: out.into(),
        }
    }

    pub fn su2(
        spins: usize,
        two_s: u32,
        two_mz: i32,
        two_l: u32,
        seed: u64,
        out: impl Into<PathBuf>,
    ) -> Self {
        Self {
            experiment: ExperimentKind::Su2,
            run: RunSettings::with_seed(seed),
            matrix: None,
            spin: Some(SpinParams {
                spins,
                two_s,
                two_mz,
                two_l,
                orthonormalize: false,
            }),
            lyapunov: LyapunovParams::default(),
            targets: Vec::new(),
            baseline: false,
            out: out.into(),
        }
    }
}
