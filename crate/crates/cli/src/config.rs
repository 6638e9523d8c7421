//! Config file loading and the range checks shared by every command.
//!
//! The file is TOML with one optional table per subcommand (`[exponent_sweep]`,
//! `[validate]`, `[efficiency]`, `[sample]`, `[detect]`) whose keys are the
//! long flag names with `-` replaced by `_`. Unknown tables or keys are errors.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::args::{DetectArgs, EfficiencyArgs, SampleArgs, SweepArgs, ValidateArgs};
use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub exponent_sweep: SweepArgs,
    #[serde(default)]
    pub validate: ValidateArgs,
    #[serde(default)]
    pub efficiency: EfficiencyArgs,
    #[serde(default)]
    pub sample: SampleArgs,
    #[serde(default)]
    pub detect: DetectArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
    }
}

/// Power ratio from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid `{field}`: {reason}"))
}

pub(crate) fn finite(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be finite, got {value}")))
    }
}

pub(crate) fn positive(field: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {value}")))
    }
}

/// `lo <= value <= hi`, or `lo <= value < hi` when `open_upper`.
pub(crate) fn within(field: &str, value: f64, lo: f64, hi: f64, open_upper: bool) -> Result<f64> {
    let ok = value >= lo && if open_upper { value < hi } else { value <= hi };
    if ok {
        Ok(value)
    } else {
        let bracket = if open_upper { ")" } else { "]" };
        Err(invalid(field, format!("must lie in [{lo}, {hi}{bracket}, got {value}")))
    }
}

pub(crate) fn at_least(field: &str, value: usize, min: usize) -> Result<usize> {
    if value >= min {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be at least {min}, got {value}")))
    }
}

pub(crate) fn at_most(field: &str, value: usize, max: usize) -> Result<usize> {
    if value <= max {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be at most {max}, got {value}")))
    }
}

/// Even quadrature grid in `[MIN_GRID, 16384]`.
pub(crate) fn quadrature_grid(field: &str, value: usize) -> Result<usize> {
    at_least(field, value, hgmrf_core::exponent::MIN_GRID)?;
    at_most(field, value, 16384)?;
    if !value.is_multiple_of(2) {
        return Err(invalid(field, format!("must be even, got {value}")));
    }
    Ok(value)
}

pub(crate) fn non_empty<T>(field: &str, values: Vec<T>) -> Result<Vec<T>> {
    if values.is_empty() {
        Err(invalid(field, "list must not be empty"))
    } else {
        Ok(values)
    }
}

pub(crate) fn ascending<T: PartialOrd + std::fmt::Debug>(field: &str, values: Vec<T>) -> Result<Vec<T>> {
    if values.windows(2).all(|w| w[0] < w[1]) {
        Ok(values)
    } else {
        Err(invalid(field, format!("must be strictly ascending, got {values:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decibels_are_power_ratios() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(-5.0) - 10f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = FileConfig::parse("[validate]\ntrails = 10\n").unwrap_err();
        assert!(err.contains("trails"), "{err}");
        let err = FileConfig::parse("[nonsense]\n").unwrap_err();
        assert!(err.contains("nonsense"), "{err}");
    }

    #[test]
    fn sections_are_optional() {
        let cfg = FileConfig::parse("[detect]\nside = 8\n").unwrap();
        assert_eq!(cfg.detect.side, Some(8));
        assert!(cfg.validate.trials.is_none());
    }

    #[test]
    fn range_messages_name_the_field() {
        let msg = within("zeta", 0.3, 0.0, 0.25, true).unwrap_err().to_string();
        assert!(msg.contains("`zeta`") && msg.contains("0.3"), "{msg}");
        assert!(at_least("trials", 5, 100).unwrap_err().to_string().contains("`trials`"));
        assert!(ascending("sides", vec![4, 2]).is_err());
        assert!(positive("delta", f64::NAN).is_err());
    }
}
