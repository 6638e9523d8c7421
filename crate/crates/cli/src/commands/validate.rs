//! End-to-end checks of the detector against the theory, recomputed on every run.

use std::path::PathBuf;

use hgmrf_core::detector::{
    calibrate_threshold, dense_llr, estimate_miss_probability_tilted, normalized_llr_convergence, LikelihoodRatio,
    MIN_TRIALS,
};
use hgmrf_core::exponent::error_exponent;
use hgmrf_core::field::{derive_seed, Hypothesis, TorusSampler, DENSE_MAX_SIDE};
use hgmrf_core::gmrf::{sfar_spectrum, snr};
use hgmrf_core::SfarParams;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::ValidateArgs;
use crate::config::{ascending, at_least, at_most, non_empty, quadrature_grid, within};
use crate::error::{CliError, Result};
use crate::{model_params, to_json, Sink};

pub const DEFAULT_SIDES: [usize; 3] = [16, 32, 64];
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_ZETA: f64 = 0.1;
pub const DEFAULT_GRID: usize = 1024;
pub const DEFAULT_MISS_SIDES: [usize; 3] = [8, 12, 16];
pub const DEFAULT_MISS_TRIALS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_ORACLE_OBSERVATIONS: usize = 100;
pub const DEFAULT_SEED: u64 = 1;

/// Sides of the dense-matrix oracle comparison.
pub const ORACLE_SIDES: [usize; 5] = [2, 3, 4, 5, 6];
/// Relative agreement required between the frequency-domain and dense LLRs.
pub const ORACLE_TOLERANCE: f64 = 1e-9;
/// Largest admissible gap between the finite-lattice rate and the quadrature.
pub const RATE_GAP_TOLERANCE: f64 = 1e-3;
/// Monte Carlo means must sit within this many standard errors of the exact rate.
pub const CONVERGENCE_SIGMAS: f64 = 3.0;
/// Largest admissible ratio between the measured miss exponent and the quadrature exponent.
pub const MISS_EXPONENT_FACTOR: f64 = 2.0;

const DOMAIN_ORACLE: u64 = 0x0_0ac1e;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatePlan {
    pub sides: Vec<usize>,
    pub trials: usize,
    pub snr_db: f64,
    pub zeta: f64,
    pub sigma2: f64,
    pub grid: usize,
    pub miss_sides: Vec<usize>,
    pub miss_trials: usize,
    pub alpha: f64,
    pub oracle_observations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl ValidateArgs {
    pub fn resolve(self) -> Result<ValidatePlan> {
        let sides = ascending("sides", non_empty("sides", self.sides.unwrap_or_else(|| DEFAULT_SIDES.to_vec()))?)?;
        for &s in &sides {
            at_least("sides", s, 2)?;
            at_most("sides", s, 4096)?;
        }
        let miss_sides = ascending(
            "miss_sides",
            non_empty("miss_sides", self.miss_sides.unwrap_or_else(|| DEFAULT_MISS_SIDES.to_vec()))?,
        )?;
        if miss_sides.len() < 2 {
            return Err(CliError::Usage("invalid `miss_sides`: a trend needs at least two sides".into()));
        }
        for &s in &miss_sides {
            at_least("miss_sides", s, 2)?;
            at_most("miss_sides", s, 1024)?;
        }
        let plan = ValidatePlan {
            sides,
            trials: at_least("trials", self.trials.unwrap_or(DEFAULT_TRIALS), 2)?,
            snr_db: self.snr_db.unwrap_or(0.0),
            zeta: self.zeta.unwrap_or(DEFAULT_ZETA),
            sigma2: self.sigma2.unwrap_or(1.0),
            grid: quadrature_grid("grid", self.grid.unwrap_or(DEFAULT_GRID))?,
            miss_sides,
            miss_trials: at_least("miss_trials", self.miss_trials.unwrap_or(DEFAULT_MISS_TRIALS), MIN_TRIALS)?,
            alpha: within("alpha", self.alpha.unwrap_or(DEFAULT_ALPHA), 0.0, 1.0, true)?,
            oracle_observations: at_least(
                "oracle_observations",
                self.oracle_observations.unwrap_or(DEFAULT_ORACLE_OBSERVATIONS),
                1,
            )?,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            output: self.output,
        };
        if plan.alpha == 0.0 {
            return Err(CliError::Usage("invalid `alpha`: must be positive".into()));
        }
        plan.params()?;
        Ok(plan)
    }
}

impl ValidatePlan {
    pub fn params(&self) -> Result<SfarParams> {
        model_params(self.snr_db, self.zeta, self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub measured: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub parameters: ValidatePlan,
    pub kappa: f64,
    pub snr: f64,
    /// Quadrature error exponent, nats per sensor.
    pub exponent: f64,
    pub exponent_error_estimate: f64,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&str> {
        self.criteria.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn llr_convergence(plan: &ValidatePlan, params: &SfarParams) -> Result<CriterionResult> {
    let rows = normalized_llr_convergence(params, &plan.sides, plan.trials, plan.seed)?;
    let passed = rows
        .iter()
        .all(|r| (r.mean - r.finite_rate).abs() <= CONVERGENCE_SIGMAS * r.std_error);
    let measured: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "side": r.side,
                "mean": r.mean,
                "std": r.std,
                "std_error": r.std_error,
                "finite_rate": r.finite_rate,
                "z_score": (r.mean - r.finite_rate) / r.std_error,
            })
        })
        .collect();
    Ok(CriterionResult {
        name: "normalized_llr_convergence".into(),
        passed,
        measured: json!({ "rows": measured, "sigmas": CONVERGENCE_SIGMAS }),
    })
}

fn finite_rate_consistency(plan: &ValidatePlan, params: &SfarParams, quadrature: f64) -> Result<CriterionResult> {
    let gaps: Vec<f64> = plan
        .sides
        .iter()
        .map(|&n| LikelihoodRatio::new(params, n).map(|d| (d.kl_rate() - quadrature).abs()))
        .collect::<hgmrf_core::Result<_>>()?;
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let last = *gaps.last().expect("sides is non-empty");
    Ok(CriterionResult {
        name: "finite_rate_vs_quadrature".into(),
        passed: monotone && last <= RATE_GAP_TOLERANCE,
        measured: json!({
            "sides": plan.sides,
            "gaps": gaps,
            "monotone": monotone,
            "tolerance": RATE_GAP_TOLERANCE,
        }),
    })
}

fn oracle_equivalence(plan: &ValidatePlan, params: &SfarParams) -> Result<CriterionResult> {
    let mut worst = 0.0f64;
    let mut per_side = Vec::new();
    for side in ORACLE_SIDES {
        debug_assert!(side <= DENSE_MAX_SIDE);
        let detector = LikelihoodRatio::new(params, side)?;
        let sampler = TorusSampler::new(*params, side)?;
        let mut side_worst = 0.0f64;
        for t in 0..plan.oracle_observations as u64 {
            let hyp = if t % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
            let y = sampler.observation(hyp, derive_seed(plan.seed, DOMAIN_ORACLE + side as u64, t));
            let fast = detector.evaluate(y.values()).value;
            let dense = dense_llr(y.values(), params, side)?;
            side_worst = side_worst.max((fast - dense).abs() / dense.abs().max(f64::MIN_POSITIVE));
        }
        worst = worst.max(side_worst);
        per_side.push(json!({ "side": side, "max_relative_error": side_worst }));
    }
    Ok(CriterionResult {
        name: "llr_oracle_equivalence".into(),
        passed: worst <= ORACLE_TOLERANCE,
        measured: json!({
            "per_side": per_side,
            "observations_per_side": plan.oracle_observations,
            "tolerance": ORACLE_TOLERANCE,
        }),
    })
}

fn miss_probability_trend(plan: &ValidatePlan, params: &SfarParams, exponent: f64) -> Result<CriterionResult> {
    let mut rows = Vec::new();
    let mut rates = Vec::new();
    for (i, &side) in plan.miss_sides.iter().enumerate() {
        let seed = derive_seed(plan.seed, 0x4d15, i as u64);
        let threshold = calibrate_threshold(params, side, plan.alpha, plan.miss_trials, seed)?;
        let est = estimate_miss_probability_tilted(params, side, threshold, plan.miss_trials, seed)?;
        let rate = -est.p_miss.ln() / (side * side) as f64;
        rates.push(rate);
        rows.push(json!({
            "side": side,
            "threshold": threshold,
            "p_miss": est.p_miss,
            "p_miss_std_error": est.std_error,
            "tilt": est.tilt,
            "miss_exponent": rate,
        }));
    }
    let increasing = rates.windows(2).all(|w| w[1] > w[0]);
    let last = *rates.last().expect("at least two sides");
    let ratio = last / exponent;
    let within_factor = ratio.is_finite() && (1.0 / MISS_EXPONENT_FACTOR..=MISS_EXPONENT_FACTOR).contains(&ratio);
    Ok(CriterionResult {
        name: "miss_probability_trend".into(),
        passed: increasing && within_factor,
        measured: json!({
            "alpha": plan.alpha,
            "trials": plan.miss_trials,
            "estimator": "exponential tilting",
            "rows": rows,
            "increasing": increasing,
            "last_over_exponent": ratio,
            "factor": MISS_EXPONENT_FACTOR,
        }),
    })
}

pub fn validation_report(plan: &ValidatePlan) -> Result<ValidationReport> {
    let params = plan.params()?;
    let quad = error_exponent(&sfar_spectrum(params), params.sigma2(), plan.grid)?;
    let criteria = vec![
        llr_convergence(plan, &params)?,
        finite_rate_consistency(plan, &params, quad.value)?,
        oracle_equivalence(plan, &params)?,
        miss_probability_trend(plan, &params, quad.value)?,
    ];
    Ok(ValidationReport {
        parameters: plan.clone(),
        kappa: params.kappa(),
        snr: snr(&params),
        exponent: quad.value,
        exponent_error_estimate: quad.error_estimate,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

pub fn run(args: ValidateArgs) -> Result<()> {
    let plan = args.resolve()?;
    let report = validation_report(&plan)?;
    let mut out = Sink::file_or_stdout(plan.output.as_deref())?;
    out.write_all(to_json(&report).as_bytes())?;
    out.finish()?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::ValidationFailed(report.failures().join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_plan() -> ValidatePlan {
        ValidateArgs {
            sides: Some(vec![8, 16]),
            trials: Some(100),
            grid: Some(128),
            miss_sides: Some(vec![6, 8]),
            miss_trials: Some(2000),
            oracle_observations: Some(5),
            ..ValidateArgs::default()
        }
        .resolve()
        .unwrap()
    }

    #[test]
    fn defaults_match_the_documented_run() {
        let plan = ValidateArgs::default().resolve().unwrap();
        assert_eq!(plan.sides, vec![16, 32, 64]);
        assert_eq!(plan.trials, 200);
        assert_eq!(plan.snr_db, 0.0);
        assert_eq!(plan.zeta, 0.1);
        assert_eq!(plan.miss_sides, vec![8, 12, 16]);
        assert!(plan.miss_trials >= 10_000);
    }

    #[test]
    fn quick_report_passes_and_is_reproducible() {
        let plan = quick_plan();
        let a = validation_report(&plan).unwrap();
        let b = validation_report(&plan).unwrap();
        assert_eq!(to_json(&a), to_json(&b));
        assert_eq!(a.criteria.len(), 4);
        assert!(a.criteria.iter().take(3).all(|c| c.passed), "{}", to_json(&a));
    }

    #[test]
    fn out_of_range_fields_are_named() {
        for (args, field) in [
            (
                ValidateArgs {
                    zeta: Some(0.25),
                    ..ValidateArgs::default()
                },
                "`zeta`",
            ),
            (
                ValidateArgs {
                    sides: Some(vec![32, 16]),
                    ..ValidateArgs::default()
                },
                "`sides`",
            ),
            (
                ValidateArgs {
                    miss_trials: Some(10),
                    ..ValidateArgs::default()
                },
                "`miss_trials`",
            ),
            (
                ValidateArgs {
                    alpha: Some(1.5),
                    ..ValidateArgs::default()
                },
                "`alpha`",
            ),
        ] {
            let msg = args.resolve().unwrap_err().to_string();
            assert!(msg.contains(field), "{msg}");
        }
    }
}
