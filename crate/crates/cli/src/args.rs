//! Flags. Every command's argument struct doubles as its config-file table, so
//! each field is optional here and defaults are applied after merging.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "hgmrf",
    version,
    about = "Detection error exponents and sensor-network efficiency for hidden 2D Gauss-Markov random fields"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Error exponent over a grid of SNR and edge dependence values (CSV).
    ExponentSweep(SweepArgs),
    /// End-to-end consistency checks of the detector against theory (JSON).
    Validate(ValidateArgs),
    /// Energy efficiency sweep in the area or density regime (CSV + JSON verdict).
    Efficiency(EfficiencyArgs),
    /// Draw one field on the torus and dump it (CSV or binary).
    Sample(SampleArgs),
    /// Calibrate a level-alpha detector and estimate its error rates.
    Detect(DetectArgs),
}

/// Overlays `self` on `lower`, field by field.
macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn overlay(self, lower: Self) -> Self {
                Self { $($field: self.$field.or(lower.$field)),* }
            }
        }
    };
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// SNR values in dB [default: 10,0,-3,-5].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub snr_db: Option<Vec<f64>>,
    /// Step of the uniform zeta grid starting at 0 [default: 0.005].
    #[arg(long)]
    pub zeta_step: Option<f64>,
    /// Last zeta of the grid, appended if off-grid [default: 0.2499].
    #[arg(long)]
    pub zeta_max: Option<f64>,
    /// Quadrature points per axis [default: 256].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output CSV path [default: stdout].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
overlay!(SweepArgs { snr_db, zeta_step, zeta_max, grid, output });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateArgs {
    /// Lattice sides for the LLR convergence check [default: 16,32,64].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sides: Option<Vec<usize>>,
    /// Monte Carlo trials per side for the convergence check [default: 200].
    #[arg(long)]
    pub trials: Option<usize>,
    /// SNR in dB [default: 0, i.e. SNR = 1].
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Edge dependence factor, in [0, 1/4) [default: 0.1].
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Measurement noise variance [default: 1].
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Reference quadrature grid per axis [default: 1024].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Sides for the miss-probability trend [default: 8,12,16].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub miss_sides: Option<Vec<usize>>,
    /// Trials for threshold calibration and the miss estimate [default: 10000].
    #[arg(long)]
    pub miss_trials: Option<usize>,
    /// False-alarm level for the miss-probability trend [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Random observations per side in the dense oracle check [default: 100].
    #[arg(long)]
    pub oracle_observations: Option<usize>,
    /// Run seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON path [default: stdout].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
overlay!(ValidateArgs {
    sides,
    trials,
    snr_db,
    zeta,
    sigma2,
    grid,
    miss_sides,
    miss_trials,
    alpha,
    oracle_observations,
    seed,
    output,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Growing area at fixed spacing.
    Area,
    /// Growing density in a fixed square.
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// The same zeta at every spacing.
    Constant,
    /// zeta = exp(-r / correlation_length) / 4.
    Exponential,
    /// Piecewise-linear `r,zeta` table read from `--table`.
    Table,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyArgs {
    /// Sweep regime [default: area].
    #[arg(long, value_enum)]
    pub regime: Option<Regime>,
    /// Grid half widths n, ascending [default: 8,16,...,512 (area), 2,4,...,64 (density)].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n_list: Option<Vec<u32>>,
    /// Sensor spacing for the area regime [default: 1].
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Side length of the monitored square for the density regime [default: 1].
    #[arg(long)]
    pub extent: Option<f64>,
    /// Propagation loss factor, at least 2 [default: 2].
    #[arg(long)]
    pub delta: Option<f64>,
    /// SNR in dB [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Spacing-to-zeta map [default: constant].
    #[arg(long, value_enum)]
    pub map: Option<MapKind>,
    /// zeta of the constant map [default: 0.1].
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Correlation length of the exponential map [default: 0.1].
    #[arg(long)]
    pub correlation_length: Option<f64>,
    /// CSV of `r,zeta` rows for the table map.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Tail fraction of the density sweep used for slope fits [default: 0.5].
    #[arg(long)]
    pub tail_fraction: Option<f64>,
    /// Band around the critical slope classified as threshold [default: 0.05].
    #[arg(long)]
    pub slope_tolerance: Option<f64>,
    /// Quadrature points per axis [default: 256].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output CSV path [default: stdout].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output JSON verdict path [default: stderr].
    #[arg(long)]
    pub verdict: Option<PathBuf>,
}
overlay!(EfficiencyArgs {
    regime,
    n_list,
    spacing,
    extent,
    delta,
    snr_db,
    map,
    zeta,
    correlation_length,
    table,
    tail_fraction,
    slope_tolerance,
    grid,
    output,
    verdict,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Signal,
    Noise,
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisArg {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    Csv,
    Binary,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleArgs {
    /// Torus side N [default: 64].
    #[arg(long)]
    pub side: Option<usize>,
    /// What to draw [default: signal].
    #[arg(long, value_enum)]
    pub kind: Option<SampleKind>,
    /// Hypothesis for observations [default: h1].
    #[arg(long, value_enum)]
    pub hypothesis: Option<HypothesisArg>,
    /// SNR in dB [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Edge dependence factor, in [0, 1/4) [default: 0.1].
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Measurement noise variance [default: 1].
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<FieldFormat>,
    /// Output path [default: stdout].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
overlay!(SampleArgs { side, kind, hypothesis, snr_db, zeta, sigma2, seed, format, output });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectArgs {
    /// Torus side N [default: 16].
    #[arg(long)]
    pub side: Option<usize>,
    /// False-alarm level [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Trials for calibration and for each error-rate estimate [default: 10000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// SNR in dB [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Edge dependence factor, in [0, 1/4) [default: 0.1].
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Measurement noise variance [default: 1].
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: json]
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Output path [default: stdout].
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
overlay!(DetectArgs { side, alpha, trials, snr_db, zeta, sigma2, seed, format, output });
