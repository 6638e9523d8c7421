use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use hgmrf_core::energy::{
    area_regime_sweep, density_regime_sweep, ConstantMap, CorrMap, DensityRegime, DensityVerdict, EfficiencyPoint,
    EnergyScenario, ExponentialMap, TabulatedMap,
};
use hgmrf_core::exponent::DEFAULT_GRID;
use serde::Serialize;

use crate::args::{EfficiencyArgs, MapKind, Regime};
use crate::config::{ascending, db_to_linear, finite, non_empty, positive, quadrature_grid, within};
use crate::error::{CliError, Result};
use crate::{to_json, Sink};

/// Tolerance on the area-regime slope around `-1/2`.
pub const AREA_SLOPE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct EfficiencyPlan {
    pub regime: Regime,
    pub n_list: Vec<u32>,
    pub scenario: EnergyScenario,
    pub density: DensityRegime,
    pub output: Option<PathBuf>,
    pub verdict: Option<PathBuf>,
}

fn default_n_list(regime: Regime) -> Vec<u32> {
    match regime {
        Regime::Area => (3..=9).map(|e| 1 << e).collect(),
        Regime::Density => (1..=6).map(|e| 1 << e).collect(),
    }
}

impl EfficiencyArgs {
    pub fn resolve(self) -> Result<EfficiencyPlan> {
        let regime = self.regime.unwrap_or(Regime::Area);
        let n_list = ascending("n_list", non_empty("n_list", self.n_list.unwrap_or_else(|| default_n_list(regime)))?)?;
        if n_list.len() < 2 || n_list[0] == 0 {
            return Err(CliError::Usage(
                "invalid `n_list`: need at least two positive half widths".into(),
            ));
        }
        let map: Arc<dyn CorrMap> = match self.map.unwrap_or(MapKind::Constant) {
            MapKind::Constant => Arc::new(ConstantMap::new(within("zeta", self.zeta.unwrap_or(0.1), 0.0, 0.25, false)?)?),
            MapKind::Exponential => Arc::new(ExponentialMap::new(positive(
                "correlation_length",
                self.correlation_length.unwrap_or(0.1),
            )?)?),
            MapKind::Table => {
                let path = self
                    .table
                    .ok_or_else(|| CliError::Usage("invalid `table`: required when `map` is `table`".into()))?;
                let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                Arc::new(TabulatedMap::from_csv(&text).map_err(|e| {
                    CliError::Usage(format!("invalid `table` ({}): {e}", path.display()))
                })?)
            }
        };
        let delta = finite("delta", self.delta.unwrap_or(2.0))?;
        if delta < 2.0 {
            return Err(CliError::Usage(format!("invalid `delta`: must be at least 2, got {delta}")));
        }
        let snr = db_to_linear(finite("snr_db", self.snr_db.unwrap_or(0.0))?);
        let spacing = positive("spacing", self.spacing.unwrap_or(1.0))?;
        let scenario = EnergyScenario::new(n_list[0], spacing, delta, snr, map)?
            .with_grid(quadrature_grid("grid", self.grid.unwrap_or(DEFAULT_GRID))?);
        let tail_fraction = self.tail_fraction.unwrap_or(0.5);
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(CliError::Usage(format!("invalid `tail_fraction`: must lie in (0, 1], got {tail_fraction}")));
        }
        let density = DensityRegime {
            extent: positive("extent", self.extent.unwrap_or(1.0))?,
            tail_fraction,
            slope_tolerance: within("slope_tolerance", self.slope_tolerance.unwrap_or(0.05), 0.0, 10.0, false)?,
        };
        Ok(EfficiencyPlan {
            regime,
            n_list,
            scenario,
            density,
            output: self.output,
            verdict: self.verdict,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum Verdict {
    Area {
        slope: f64,
        slope_std_error: f64,
        reference_slope: f64,
        tolerance: f64,
        within_tolerance: bool,
        delta: f64,
        snr: f64,
        spacing: f64,
    },
    Density {
        verdict: DensityVerdict,
        exponent_slope: f64,
        efficiency_slope: f64,
        reference_slope: f64,
        fit_points: usize,
        slope_tolerance: f64,
        delta: f64,
        snr: f64,
        extent: f64,
        caveat: String,
    },
}

pub fn efficiency_sweep(plan: &EfficiencyPlan) -> Result<(Vec<EfficiencyPoint>, Verdict)> {
    let s = &plan.scenario;
    match plan.regime {
        Regime::Area => {
            let sweep = area_regime_sweep(s, &plan.n_list)?;
            let verdict = Verdict::Area {
                slope: sweep.fit.slope,
                slope_std_error: sweep.fit.slope_std_error,
                reference_slope: sweep.reference_slope,
                tolerance: AREA_SLOPE_TOLERANCE,
                within_tolerance: (sweep.fit.slope - sweep.reference_slope).abs() <= AREA_SLOPE_TOLERANCE,
                delta: s.delta,
                snr: s.snr,
                spacing: s.spacing,
            };
            Ok((sweep.points, verdict))
        }
        Regime::Density => {
            let sweep = density_regime_sweep(s, &plan.n_list, plan.density)?;
            let verdict = Verdict::Density {
                verdict: sweep.verdict,
                exponent_slope: sweep.exponent_slope,
                efficiency_slope: sweep.efficiency_slope,
                reference_slope: sweep.reference_slope,
                fit_points: sweep.fit_points,
                slope_tolerance: plan.density.slope_tolerance,
                delta: s.delta,
                snr: s.snr,
                extent: plan.density.extent,
                caveat: sweep.caveat,
            };
            Ok((sweep.points, verdict))
        }
    }
}

pub fn run(args: EfficiencyArgs) -> Result<()> {
    let plan = args.resolve()?;
    let (points, verdict) = efficiency_sweep(&plan)?;
    let mut table = Sink::file_or_stdout(plan.output.as_deref())?;
    table.line(EfficiencyPoint::CSV_HEADER)?;
    for p in &points {
        table.line(&p.csv_row())?;
    }
    table.finish()?;
    let mut out = Sink::file_or_stderr(plan.verdict.as_deref())?;
    out.write_all(to_json(&verdict).as_bytes())?;
    out.finish()
}
