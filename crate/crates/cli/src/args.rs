use std::path::PathBuf;

use clap::Parser;

use crate::manifest::{
    ExperimentKind, ExperimentManifest, LyapunovParams, MatrixParams, RunSettings, Scale,
    SpinParams,
};

#[derive(Debug, Parser)]
#[command(
    name = "purify",
    version,
    about = "Stabilized Richardson eigenvector purification experiments"
)]
pub struct Args {
    /// Load the whole experiment from a manifest file; other flags are ignored.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "tridiag")]
    pub experiment: ExperimentKind,

    /// Matrix dimension (tridiag, lyapunov).
    #[arg(long)]
    pub n: Option<usize>,

    /// Matrix seed; also the controller seed unless --rng-seed is given.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub rng_seed: Option<u64>,

    /// Distinct-level index to purify; repeat for several targets.
    #[arg(long = "target-k")]
    pub target_k: Vec<usize>,

    #[arg(long, default_value_t = 1e-10)]
    pub delta_bar: f64,

    #[arg(long = "sigma-target", default_value_t = 1e-10)]
    pub sigma_target: f64,

    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,

    #[arg(long, default_value_t = 1e-5)]
    pub refresh_threshold: f64,

    /// 0 disables refreshing.
    #[arg(long, default_value_t = 50)]
    pub refresh_period: usize,

    #[arg(long, value_enum, default_value = "smallest-spacing")]
    pub weight_scale: Scale,

    /// Also run the naive periodic sequence.
    #[arg(long)]
    pub baseline: bool,

    /// Number of spins (su2).
    #[arg(long)]
    pub spins: Option<usize>,

    /// Spin magnitude, e.g. `1/2`, `0.5` or `1` (su2).
    #[arg(long = "spin-magnitude")]
    pub spin_magnitude: Option<String>,

    /// Total magnetic quantum number of the sector (su2).
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub mz: String,

    /// Total angular momentum of the wanted multiplet (su2).
    #[arg(long = "target-l")]
    pub target_l: Option<String>,

    /// Orthonormalize the returned degenerate basis (su2).
    #[arg(long)]
    pub orthonormalize: bool,

    /// Steps of the two-trajectory estimate (lyapunov).
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,

    /// Initial separation of the two trajectories (lyapunov).
    #[arg(long, default_value_t = 1e-12)]
    pub offset: f64,

    #[arg(long, default_value_t = purify_core::diagnostics::DEFAULT_RENORM_INTERVAL)]
    pub renorm_interval: usize,

    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Parses a quantum number given as an integer, a decimal or `p/2`, and
/// returns twice its value.
pub fn parse_doubled(text: &str) -> Result<i64, String> {
    let t = text.trim();
    let bad = || format!("expected a multiple of 1/2, got {text:?}");
    if let Some((num, den)) = t.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad())?;
        return match den.trim() {
            "1" => Ok(2 * num),
            "2" => Ok(num),
            _ => Err(bad()),
        };
    }
    let x: f64 = t.parse().map_err(|_| bad())?;
    let doubled = 2.0 * x;
    if !doubled.is_finite() || doubled.fract() != 0.0 || doubled.abs() > i32::MAX as f64 {
        return Err(bad());
    }
    Ok(doubled as i64)
}

fn non_negative(value: i64, what: &str) -> Result<u32, String> {
    u32::try_from(value).map_err(|_| format!("{what} must be non-negative"))
}

impl Args {
    pub fn into_manifest(self) -> Result<ExperimentManifest, String> {
        if let Some(path) = &self.manifest {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            return serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()));
        }
        let out = self.out.ok_or("--out is required")?;
        let seed = self.seed.ok_or("--seed is required")?;
        let run = RunSettings {
            delta_bar: self.delta_bar,
            sigma_bar_target: self.sigma_target,
            max_iterations: self.max_iters,
            refresh_threshold: self.refresh_threshold,
            refresh_period: self.refresh_period,
            rng_seed: self.rng_seed.unwrap_or(seed),
            weight_scale: self.weight_scale,
        };
        let (matrix, spin) = match self.experiment {
            ExperimentKind::Tridiag | ExperimentKind::Lyapunov => {
                let n = self.n.ok_or("--n is required")?;
                (Some(MatrixParams { n, seed }), None)
            }
            ExperimentKind::Su2 => {
                let spins = self.spins.ok_or("--spins is required")?;
                let s = self
                    .spin_magnitude
                    .as_deref()
                    .ok_or("--spin-magnitude is required")?;
                let l = self.target_l.as_deref().ok_or("--target-l is required")?;
                let two_mz = parse_doubled(&self.mz)?;
                let spin = SpinParams {
                    spins,
                    two_s: non_negative(parse_doubled(s)?, "spin magnitude")?,
                    two_mz: i32::try_from(two_mz).map_err(|_| "--mz out of range".to_string())?,
                    two_l: non_negative(parse_doubled(l)?, "target l")?,
                    orthonormalize: self.orthonormalize,
                };
                (None, Some(spin))
            }
        };
        Ok(ExperimentManifest {
            experiment: self.experiment,
            run,
            matrix,
            spin,
            lyapunov: LyapunovParams {
                steps: self.steps,
                initial_offset: self.offset,
                renorm_interval: self.renorm_interval,
            },
            targets: self.target_k,
            baseline: self.baseline,
            out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubled_quantum_numbers() {
        assert_eq!(parse_doubled("1/2"), Ok(1));
        assert_eq!(parse_doubled("3/2"), Ok(3));
        assert_eq!(parse_doubled("0.5"), Ok(1));
        assert_eq!(parse_doubled("2"), Ok(4));
        assert_eq!(parse_doubled("-1"), Ok(-2));
        assert_eq!(parse_doubled("4/1"), Ok(8));
        assert!(parse_doubled("1/3").is_err());
        assert!(parse_doubled("0.25").is_err());
        assert!(parse_doubled("x").is_err());
    }

    #[test]
    fn tridiag_flags() {
        let args = Args::try_parse_from([
            "purify",
            "--n",
            "64",
            "--seed",
            "3",
            "--target-k",
            "0",
            "--target-k",
            "5",
            "--baseline",
            "--out",
            "o",
        ])
        .unwrap();
        let m = args.into_manifest().unwrap();
        assert_eq!(m.experiment, ExperimentKind::Tridiag);
        assert_eq!(m.matrix, Some(MatrixParams { n: 64, seed: 3 }));
        assert_eq!(m.targets, vec![0, 5]);
        assert_eq!(m.run.rng_seed, 3);
        assert_eq!(m.run.delta_bar, 1e-10);
        assert_eq!(m.run.refresh_period, 50);
        assert!(m.baseline);
    }

    #[test]
    fn su2_flags() {
        let args = Args::try_parse_from([
            "purify",
            "--experiment",
            "su2",
            "--spins",
            "4",
            "--spin-magnitude",
            "1/2",
            "--mz",
            "0",
            "--target-l",
            "1",
            "--seed",
            "1",
            "--out",
            "o",
        ])
        .unwrap();
        let spin = args.into_manifest().unwrap().spin.unwrap();
        assert_eq!(
            (spin.spins, spin.two_s, spin.two_mz, spin.two_l),
            (4, 1, 0, 2)
        );
    }

    #[test]
    fn seed_and_out_are_mandatory() {
        let args = Args::try_parse_from(["purify", "--n", "8", "--out", "o"]).unwrap();
        assert!(args.into_manifest().unwrap_err().contains("--seed"));
        let args = Args::try_parse_from(["purify", "--n", "8", "--seed", "1"]).unwrap();
        assert!(args.into_manifest().unwrap_err().contains("--out"));
    }
}
