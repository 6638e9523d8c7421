use std::path::PathBuf;

use hgmrf_core::exponent::{uniform_zeta_grid, zeta_sweep, DEFAULT_GRID};

use crate::args::SweepArgs;
use crate::config::{db_to_linear, finite, non_empty, positive, quadrature_grid, within};
use crate::error::Result;
use crate::Sink;

pub const DEFAULT_SNR_DB: [f64; 4] = [10.0, 0.0, -3.0, -5.0];
pub const DEFAULT_ZETA_STEP: f64 = 0.005;
pub const DEFAULT_ZETA_MAX: f64 = 0.2499;

pub const CSV_HEADER: &str = "snr_db,zeta,K_s,grid,err_est,argmax";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub snr_db: Vec<f64>,
    pub zetas: Vec<f64>,
    pub grid: usize,
    pub output: Option<PathBuf>,
}

impl SweepArgs {
    pub fn resolve(self) -> Result<SweepPlan> {
        let snr_db = non_empty("snr_db", self.snr_db.unwrap_or_else(|| DEFAULT_SNR_DB.to_vec()))?;
        for &db in &snr_db {
            finite("snr_db", db)?;
        }
        let step = positive("zeta_step", self.zeta_step.unwrap_or(DEFAULT_ZETA_STEP))?;
        let upper = within("zeta_max", self.zeta_max.unwrap_or(DEFAULT_ZETA_MAX), 0.0, 0.25, false)?;
        let grid = quadrature_grid("grid", self.grid.unwrap_or(DEFAULT_GRID))?;
        Ok(SweepPlan {
            snr_db,
            zetas: uniform_zeta_grid(step, upper)?,
            grid,
            output: self.output,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub zeta: f64,
    pub k_s: f64,
    pub grid: usize,
    pub err_est: f64,
    /// Whether this row holds the largest exponent of its SNR.
    pub argmax: bool,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.snr_db, self.zeta, self.k_s, self.grid, self.err_est, self.argmax as u8
        )
    }
}

pub fn sweep_rows(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(plan.snr_db.len() * plan.zetas.len());
    for &db in &plan.snr_db {
        let sweep = zeta_sweep(db_to_linear(db), &plan.zetas, plan.grid)?;
        let best = sweep.argmax();
        rows.extend(sweep.zetas.iter().zip(&sweep.exponents).enumerate().map(|(i, (&zeta, r))| SweepRow {
            snr_db: db,
            zeta,
            k_s: r.value,
            grid: r.grid_points_per_axis,
            err_est: r.error_estimate,
            argmax: i == best,
        }));
    }
    Ok(rows)
}

pub fn run(args: SweepArgs) -> Result<()> {
    let plan = args.resolve()?;
    let rows = sweep_rows(&plan)?;
    let mut out = Sink::file_or_stdout(plan.output.as_deref())?;
    out.line(CSV_HEADER)?;
    for row in &rows {
        out.line(&row.csv())?;
    }
    out.finish()
}
