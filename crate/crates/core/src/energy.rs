//! Information per unit energy of a grid sensor network.
//!
//! `(2n+1)^2` sensors sit on `[-n, n]^2` with spacing `r` and forward their
//! measurements to a fusion node at the origin over minimum-hop paths of
//! `|i| + |j|` links, each costing `r^delta`. Every sensor contributes the
//! error exponent `K_s(snr, zeta)` nats, with `zeta` supplied by a pluggable
//! map from spacing to edge dependence.

use std::fmt::Debug;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::exponent::{sfar_error_exponent, DEFAULT_GRID};
use crate::gmrf::ZETA_MAX;
use crate::numeric::{linear_fit, LinearFit};

/// Map from lattice spacing `r` to the edge dependence factor `zeta`.
pub trait CorrMap: Debug + Send + Sync {
    fn zeta(&self, spacing: f64) -> f64;

    /// Short human-readable description, used in verdict caveats.
    fn describe(&self) -> String;
}

/// Same `zeta` at every spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMap {
    zeta: f64,
}

impl ConstantMap {
    pub fn new(zeta: f64) -> Result<Self> {
        check_zeta(zeta)?;
        Ok(Self { zeta })
    }
}

impl CorrMap for ConstantMap {
    fn zeta(&self, _spacing: f64) -> f64 {
        self.zeta
    }

    fn describe(&self) -> String {
        format!("constant zeta = {}", self.zeta)
    }
}

/// Edge correlation `rho(r) = exp(-r / r0)` mapped affinely to `zeta = rho / 4`.
///
/// A placeholder physical model: it is monotone with `zeta -> 1/4` as `r -> 0`
/// and `zeta -> 0` as `r -> inf`, but it is not derived from any field equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialMap {
    correlation_length: f64,
}

impl ExponentialMap {
    pub fn new(correlation_length: f64) -> Result<Self> {
        if !(correlation_length > 0.0 && correlation_length.is_finite()) {
            return Err(Error::Domain {
                name: "correlation length",
                value: correlation_length,
                reason: "must be positive and finite",
            });
        }
        Ok(Self { correlation_length })
    }
}

impl CorrMap for ExponentialMap {
    fn zeta(&self, spacing: f64) -> f64 {
        0.25 * (-spacing / self.correlation_length).exp()
    }

    fn describe(&self) -> String {
        format!(
            "exponential rho(r) = exp(-r/{}) with zeta = rho/4 (placeholder map)",
            self.correlation_length
        )
    }
}

/// Piecewise-linear interpolation of `(r, zeta)` samples, clamped outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMap {
    points: Vec<(f64, f64)>,
}

impl TabulatedMap {
    /// `points` must have strictly increasing `r`, non-increasing `zeta` in `[0, 1/4]`.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(usage("correlation table", "needs at least one (r, zeta) row"));
        }
        for &(r, z) in &points {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Domain {
                    name: "r",
                    value: r,
                    reason: "spacings must be non-negative and finite",
                });
            }
            check_zeta(z)?;
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(usage("correlation table", format!("r must increase strictly (at r = {})", w[1].0)));
            }
            if w[1].1 > w[0].1 {
                return Err(usage(
                    "correlation table",
                    format!("zeta must not increase with r (at r = {})", w[1].0),
                ));
            }
        }
        Ok(Self { points })
    }

    /// Reads `r,zeta` rows; blank lines, `#` comments and a non-numeric header row are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cells = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (cells.next(), cells.next(), cells.next()) else {
                return Err(Error::Format(format!("line {}: expected `r,zeta`", lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(r), Ok(z)) => points.push((r, z)),
                _ if points.is_empty() && lineno == 0 => continue,
                _ => return Err(Error::Format(format!("line {}: bad numbers `{line}`", lineno + 1))),
            }
        }
        Self::new(points)
    }
}

impl CorrMap for TabulatedMap {
    fn zeta(&self, spacing: f64) -> f64 {
        let pts = &self.points;
        if spacing <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((r0, z0), (r1, z1)) = (w[0], w[1]);
            if spacing <= r1 {
                return z0 + (z1 - z0) * (spacing - r0) / (r1 - r0);
            }
        }
        pts[pts.len() - 1].1
    }

    fn describe(&self) -> String {
        format!("tabulated map with {} points", self.points.len())
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if !(0.0..=ZETA_MAX).contains(&zeta) {
        return Err(Error::Domain {
            name: "zeta",
            value: zeta,
            reason: "edge dependence factor must lie in [0, 1/4]",
        });
    }
    Ok(())
}

/// `sum_{i,j=-n}^{n} (|i| + |j|) = 2n(n+1)(2n+1)`.
pub fn total_hops(half_width: i64) -> Result<u64> {
    if half_width < 0 {
        return Err(usage("half width", format!("must be non-negative, got {half_width}")));
    }
    let n = half_width as u64;
    Ok(2 * n * (n + 1) * (2 * n + 1))
}

#[derive(Debug, Clone)]
pub struct EnergyScenario {
    pub half_width: u32,
    pub spacing: f64,
    /// Propagation loss factor; link energy is `spacing^delta`.
    pub delta: f64,
    pub snr: f64,
    pub corr_map: Arc<dyn CorrMap>,
    /// Quadrature grid for the exponent.
    pub grid: usize,
}

impl EnergyScenario {
    pub fn new(half_width: u32, spacing: f64, delta: f64, snr: f64, corr_map: Arc<dyn CorrMap>) -> Result<Self> {
        let s = Self {
            half_width,
            spacing,
            delta,
            snr,
            corr_map,
            grid: DEFAULT_GRID,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Domain {
                name: "spacing",
                value: self.spacing,
                reason: "sensor spacing must be positive and finite",
            });
        }
        if !(self.delta >= 2.0 && self.delta.is_finite()) {
            return Err(Error::Domain {
                name: "delta",
                value: self.delta,
                reason: "propagation loss factor must be at least 2",
            });
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Domain {
                name: "snr",
                value: self.snr,
                reason: "SNR must be positive and finite",
            });
        }
        Ok(())
    }

    fn at(&self, half_width: u32, spacing: f64) -> Self {
        Self {
            half_width,
            spacing,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub n: u32,
    pub spacing: f64,
    pub zeta: f64,
    pub k_s: f64,
    /// Total information `(2n+1)^2 K_s`, nats.
    pub total_info: f64,
    /// Total energy `2n(n+1)(2n+1) r^delta`, relative units.
    pub total_energy: f64,
    pub eta: f64,
}

impl EfficiencyPoint {
    pub const CSV_HEADER: &'static str = "n,r_n,zeta,K_s,I_t,E_t,eta";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.spacing, self.zeta, self.k_s, self.total_info, self.total_energy, self.eta
        )
    }
}

pub fn efficiency(scenario: &EnergyScenario) -> Result<EfficiencyPoint> {
    scenario.validate()?;
    if scenario.half_width == 0 {
        return Err(usage("half width", "n = 0 has no transmissions; efficiency is undefined"));
    }
    let n = scenario.half_width;
    let zeta = scenario.corr_map.zeta(scenario.spacing);
    check_zeta(zeta)?;
    let k_s = sfar_error_exponent(scenario.snr, zeta, scenario.grid)?.value;
    let sensors = (2 * n as u64 + 1).pow(2) as f64;
    let total_info = sensors * k_s;
    let total_energy = total_hops(n as i64)? as f64 * scenario.spacing.powf(scenario.delta);
    Ok(EfficiencyPoint {
        n,
        spacing: scenario.spacing,
        zeta,
        k_s,
        total_info,
        total_energy,
        eta: total_info / total_energy,
    })
}

fn check_sweep(n_list: &[u32]) -> Result<()> {
    if n_list.len() < 2 {
        return Err(usage("n list", "a sweep needs at least two half widths"));
    }
    if n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("n list", "half widths must be positive and strictly ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaSweep {
    pub points: Vec<EfficiencyPoint>,
    /// Least-squares fit of `ln eta` against `ln area`, `area = ((2n+1) r)^2`.
    pub fit: LinearFit,
    pub reference_slope: f64,
}

/// Growing area at fixed spacing (fixed density).
pub fn area_regime_sweep(template: &EnergyScenario, n_list: &[u32]) -> Result<AreaSweep> {
    check_sweep(n_list)?;
    let points = n_list
        .par_iter()
        .map(|&n| efficiency(&template.at(n, template.spacing)))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points
        .iter()
        .map(|p| ((2.0 * p.n as f64 + 1.0) * p.spacing).powi(2).ln())
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.eta.ln()).collect();
    Ok(AreaSweep {
        fit: linear_fit(&xs, &ys),
        points,
        reference_slope: -0.5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityVerdict {
    /// The exponent decays faster than the critical rate; efficiency goes to zero.
    Vanishing,
    /// The exponent decays at the critical rate; efficiency tends to a positive constant.
    Threshold,
    /// The exponent decays slower than the critical rate; efficiency grows.
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRegime {
    /// Physical side length `R` of the monitored square; spacing is `R / (2n+1)`.
    pub extent: f64,
    /// Fraction of the sweep (its tail) used for the slope fits.
    pub tail_fraction: f64,
    /// Half-width of the band around the critical slope classified as `Threshold`.
    pub slope_tolerance: f64,
}

impl Default for DensityRegime {
    fn default() -> Self {
        Self {
            extent: 1.0,
            tail_fraction: 0.5,
            slope_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensitySweep {
    pub points: Vec<EfficiencyPoint>,
    /// Slope of `ln K_s` against `ln density` over the fit window (`-inf` if `K_s` hits zero).
    pub exponent_slope: f64,
    /// Slope of `ln eta` against `ln density` over the fit window.
    pub efficiency_slope: f64,
    /// Critical exponent slope `(1 - delta) / 2`.
    pub reference_slope: f64,
    pub fit_points: usize,
    pub verdict: DensityVerdict,
    pub caveat: String,
}

/// Growing density in a fixed square of side `extent`: spacing `R / (2n+1)`,
/// density `((2n+1)/R)^2`.
pub fn density_regime_sweep(template: &EnergyScenario, n_list: &[u32], regime: DensityRegime) -> Result<DensitySweep> {
    check_sweep(n_list)?;
    if !(regime.extent > 0.0 && regime.extent.is_finite()) {
        return Err(Error::Domain {
            name: "extent",
            value: regime.extent,
            reason: "area side length must be positive and finite",
        });
    }
    if !(regime.tail_fraction > 0.0 && regime.tail_fraction <= 1.0) {
        return Err(Error::Domain {
            name: "tail fraction",
            value: regime.tail_fraction,
            reason: "must lie in (0, 1]",
        });
    }
    if !(regime.slope_tolerance >= 0.0) {
        return Err(Error::Domain {
            name: "slope tolerance",
            value: regime.slope_tolerance,
            reason: "must be non-negative",
        });
    }
    let points = n_list
        .par_iter()
        .map(|&n| efficiency(&template.at(n, regime.extent / (2.0 * n as f64 + 1.0))))
        .collect::<Result<Vec<_>>>()?;

    let fit_points = ((points.len() as f64 * regime.tail_fraction).ceil() as usize).clamp(2, points.len());
    let window = &points[points.len() - fit_points..];
    let log_density: Vec<f64> = window
        .iter()
        .map(|p| 2.0 * ((2.0 * p.n as f64 + 1.0) / regime.extent).ln())
        .collect();
    let reference_slope = (1.0 - template.delta) / 2.0;

    let (exponent_slope, efficiency_slope) = if window.iter().any(|p| p.k_s <= 0.0) {
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    } else {
        let lk: Vec<f64> = window.iter().map(|p| p.k_s.ln()).collect();
        let le: Vec<f64> = window.iter().map(|p| p.eta.ln()).collect();
        (linear_fit(&log_density, &lk).slope, linear_fit(&log_density, &le).slope)
    };
    let verdict = if exponent_slope > reference_slope + regime.slope_tolerance {
        DensityVerdict::Growing
    } else if exponent_slope < reference_slope - regime.slope_tolerance {
        DensityVerdict::Vanishing
    } else {
        DensityVerdict::Threshold
    };
    Ok(DensitySweep {
        points,
        exponent_slope,
        efficiency_slope,
        reference_slope,
        fit_points,
        verdict,
        caveat: format!(
            "verdict is conditional on the correlation map: {}",
            template.corr_map.describe()
        ),
    })
}
