use std::path::PathBuf;

use hgmrf_core::detector::{detect, DetectionReport, MIN_TRIALS};
use hgmrf_core::SfarParams;

use crate::args::{DetectArgs, ReportFormat};
use crate::config::{at_least, at_most, within};
use crate::error::{CliError, Result};
use crate::{model_params, to_json, Sink};

pub const CSV_HEADER: &str = "side,alpha,threshold,p_false_alarm,p_false_alarm_ci,p_miss,p_miss_ci,trials,seed,kappa,zeta,sigma2";

#[derive(Debug, Clone, PartialEq)]
pub struct DetectPlan {
    pub side: usize,
    pub alpha: f64,
    pub trials: usize,
    pub params: SfarParams,
    pub seed: u64,
    pub format: ReportFormat,
    pub output: Option<PathBuf>,
}

impl DetectArgs {
    pub fn resolve(self) -> Result<DetectPlan> {
        let alpha = within("alpha", self.alpha.unwrap_or(0.1), 0.0, 1.0, true)?;
        if alpha == 0.0 {
            return Err(CliError::Usage("invalid `alpha`: must be positive".into()));
        }
        Ok(DetectPlan {
            side: at_most("side", at_least("side", self.side.unwrap_or(16), 2)?, 4096)?,
            alpha,
            trials: at_least("trials", self.trials.unwrap_or(10_000), MIN_TRIALS)?,
            params: model_params(self.snr_db.unwrap_or(0.0), self.zeta.unwrap_or(0.1), self.sigma2.unwrap_or(1.0))?,
            seed: self.seed.unwrap_or(1),
            format: self.format.unwrap_or(ReportFormat::Json),
            output: self.output,
        })
    }
}

pub fn csv_row(r: &DetectionReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.side,
        r.alpha,
        r.threshold,
        r.p_false_alarm,
        r.p_false_alarm_ci,
        r.p_miss,
        r.p_miss_ci,
        r.trials,
        r.seed,
        r.kappa,
        r.zeta,
        r.sigma2
    )
}

pub fn run(args: DetectArgs) -> Result<()> {
    let plan = args.resolve()?;
    let report = detect(&plan.params, plan.side, plan.alpha, plan.trials, plan.seed)?;
    let mut out = Sink::file_or_stdout(plan.output.as_deref())?;
    match plan.format {
        ReportFormat::Json => out.write_all(to_json(&report).as_bytes())?,
        ReportFormat::Csv => {
            out.line(CSV_HEADER)?;
            out.line(&csv_row(&report))?;
        }
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_matches_header() {
        let plan = DetectArgs {
            side: Some(6),
            trials: Some(200),
            ..DetectArgs::default()
        }
        .resolve()
        .unwrap();
        let r = detect(&plan.params, plan.side, plan.alpha, plan.trials, plan.seed).unwrap();
        assert_eq!(csv_row(&r).split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn too_few_trials_are_rejected() {
        let err = DetectArgs {
            trials: Some(10),
            ..DetectArgs::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.to_string().contains("`trials`"));
    }
}
