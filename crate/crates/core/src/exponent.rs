//! Error exponent of the Neyman-Pearson detector for a hidden CAR field.
//!
//! The exponent is the frequency average of the per-bin Gaussian
//! Kullback-Leibler divergence `D(N(0, S0) || N(0, S1))` with `S0 = sigma2`
//! and `S1 = sigma2 + 4 pi^2 f`. It is evaluated with a tensor-product
//! midpoint rule; the integrand is smooth and periodic for `zeta < 1/4`, so
//! the rule converges geometrically, and midpoints never land on the origin
//! where the perfectly correlated SFAR spectrum has its pole.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::gmrf::{SpectrumFn, FOUR_PI2, ZETA_MAX};
use crate::numeric::compensated_sum;
use crate::special::elliptic_k_unchecked;

pub const DEFAULT_GRID: usize = 256;
pub const MIN_GRID: usize = 8;

/// Quadrature value of the error exponent in nats per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentResult {
    pub value: f64,
    pub grid_points_per_axis: usize,
    /// `|value(grid) - value(grid / 2)|`.
    pub error_estimate: f64,
}

/// Kullback-Leibler rate of the `N x N` torus model, per sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteRate {
    pub side: usize,
    pub value: f64,
    /// Set when a sampled frequency hits a pole of the spectrum; `value` is then `+inf`.
    pub degenerate: bool,
}

/// `D(N(0,1) || N(0,1+x)) = (ln(1+x) - x/(1+x)) / 2` for a bin whose signal
/// to noise ratio is `x >= 0`.
pub(crate) fn gaussian_kl_ratio(x: f64) -> f64 {
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x.abs() < 1e-3 {
        // sum_{k>=2} (-1)^k (k-1)/k x^k, halved
        let x2 = x * x;
        return 0.5 * x2 * (0.5 - x * (2.0 / 3.0) + x2 * 0.75 - x2 * x * 0.8 + x2 * x2 * (5.0 / 6.0));
    }
    (0.5 * (x.ln_1p() - x / (1.0 + x))).max(0.0)
}

/// Per-frequency divergence `1/2 log((s2 + 4pi^2 f)/s2) + 1/2 s2/(s2 + 4pi^2 f) - 1/2`.
pub fn integrand(spectrum_value: f64, sigma2: f64) -> f64 {
    if spectrum_value.is_infinite() {
        return f64::INFINITY;
    }
    gaussian_kl_ratio(FOUR_PI2 * spectrum_value / sigma2)
}

/// Midpoints `-pi + (i + 1/2) h`, `h = 2 pi / grid`.
pub(crate) fn midpoint_nodes(grid: usize) -> Vec<f64> {
    let h = 2.0 * PI / grid as f64;
    (0..grid).map(|i| -PI + (i as f64 + 0.5) * h).collect()
}

/// Mean of `f` over the `grid x grid` midpoint lattice of `(-pi, pi]^2`.
/// Rows are reduced in parallel and combined in row order, so the result does
/// not depend on the number of worker threads.
fn midpoint_mean<F>(grid: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let nodes = midpoint_nodes(grid);
    let rows: Vec<f64> = nodes
        .par_iter()
        .map(|&w1| compensated_sum(nodes.iter().map(|&w2| f(w1, w2))))
        .collect();
    compensated_sum(rows) / (grid * grid) as f64
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < MIN_GRID || !grid.is_multiple_of(2) {
        return Err(usage(
            "grid",
            format!("quadrature grid must be even and at least {MIN_GRID}, got {grid}"),
        ));
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain {
            name: "sigma2",
            value: sigma2,
            reason: "noise variance must be positive and finite",
        });
    }
    Ok(())
}

fn with_halving<F>(grid: usize, f: F) -> ExponentResult
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let value = midpoint_mean(grid, &f);
    let coarse = midpoint_mean(grid / 2, &f);
    ExponentResult {
        value,
        grid_points_per_axis: grid,
        error_estimate: (value - coarse).abs(),
    }
}

/// Error exponent for an arbitrary CAR spectrum observed in noise of variance `sigma2`.
pub fn error_exponent(spectrum: &SpectrumFn, sigma2: f64, grid: usize) -> Result<ExponentResult> {
    check_grid(grid)?;
    check_sigma2(sigma2)?;
    Ok(with_halving(grid, |w1, w2| integrand(spectrum.eval(w1, w2), sigma2)))
}

/// Error exponent of the SFAR field parameterised by SNR and edge dependence.
///
/// At `zeta = 1/4` the normalising `K(1)` is infinite, every sampled bin has
/// zero signal, and the result is exactly zero.
pub fn sfar_error_exponent(snr: f64, zeta: f64, grid: usize) -> Result<ExponentResult> {
    check_grid(grid)?;
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Domain {
            name: "snr",
            value: snr,
            reason: "SNR must be positive and finite",
        });
    }
    if !(0.0..=ZETA_MAX).contains(&zeta) {
        return Err(Error::Domain {
            name: "zeta",
            value: zeta,
            reason: "edge dependence factor must lie in [0, 1/4]",
        });
    }
    if zeta == ZETA_MAX {
        return Ok(ExponentResult {
            value: 0.0,
            grid_points_per_axis: grid,
            error_estimate: 0.0,
        });
    }
    let scale = snr / ((2.0 / PI) * elliptic_k_unchecked(4.0 * zeta));
    Ok(with_halving(grid, |w1, w2| {
        let symbol = 1.0 - 2.0 * zeta * (w1.cos() + w2.cos());
        gaussian_kl_ratio(scale / symbol)
    }))
}

/// `1/2 log(1 + snr) + 1/2 / (1 + snr) - 1/2`: the i.i.d. (Stein) exponent.
pub fn stein_exponent(snr: f64) -> f64 {
    gaussian_kl_ratio(snr)
}

/// Kullback-Leibler rate `(1/N^2) D(p0 || p1)` of the `N x N` torus model,
/// whose covariance eigenvalues are `sigma2` and `sigma2 + 4 pi^2 f(2 pi k/N, 2 pi l/N)`.
pub fn finite_lattice_kl_rate(spectrum: &SpectrumFn, sigma2: f64, side: usize) -> Result<FiniteRate> {
    if side < 2 {
        return Err(usage("side", format!("lattice side must be at least 2, got {side}")));
    }
    check_sigma2(sigma2)?;
    let freqs = dft_frequencies(side);
    let rows: Vec<f64> = freqs
        .par_iter()
        .map(|&w1| compensated_sum(freqs.iter().map(|&w2| integrand(spectrum.eval(w1, w2), sigma2))))
        .collect();
    let degenerate = rows.iter().any(|r| r.is_infinite());
    let value = if degenerate {
        f64::INFINITY
    } else {
        compensated_sum(rows) / (side * side) as f64
    };
    Ok(FiniteRate {
        side,
        value,
        degenerate,
    })
}

/// `2 pi k / N` folded into `(-pi, pi]`.
pub(crate) fn dft_frequencies(side: usize) -> Vec<f64> {
    (0..side)
        .map(|k| {
            let k = if 2 * k > side { k as f64 - side as f64 } else { k as f64 };
            2.0 * PI * k / side as f64
        })
        .collect()
}

/// `0, step, 2 step, ...` up to `upper`, with `upper` appended when it is not on the grid.
pub fn uniform_zeta_grid(step: f64, upper: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(usage("zeta step", format!("must be positive, got {step}")));
    }
    if !(0.0..=ZETA_MAX).contains(&upper) {
        return Err(Error::Domain {
            name: "zeta",
            value: upper,
            reason: "upper end of the zeta grid must lie in [0, 1/4]",
        });
    }
    let mut zetas = Vec::new();
    let mut i = 0u64;
    loop {
        let z = round_to_grid(i as f64 * step);
        if z > upper + 1e-12 {
            break;
        }
        zetas.push(z.min(upper));
        i += 1;
    }
    if zetas.last().is_some_and(|&z| (z - upper).abs() > 1e-12) {
        zetas.push(upper);
    }
    Ok(zetas)
}

fn round_to_grid(z: f64) -> f64 {
    (z * 1e12).round() / 1e12
}

/// One SNR's exponent curve over a zeta grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaSweep {
    pub snr: f64,
    pub zetas: Vec<f64>,
    pub exponents: Vec<ExponentResult>,
}

impl ZetaSweep {
    /// Index of the largest exponent (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.exponents.iter().enumerate() {
            if r.value > self.exponents[best].value {
                best = i;
            }
        }
        best
    }

    pub fn argmax_zeta(&self) -> f64 {
        self.zetas[self.argmax()]
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.exponents.windows(2).all(|w| w[1].value <= w[0].value)
    }
}

pub fn zeta_sweep(snr: f64, zetas: &[f64], grid: usize) -> Result<ZetaSweep> {
    let exponents = zetas
        .par_iter()
        .map(|&z| sfar_error_exponent(snr, z, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(ZetaSweep {
        snr,
        zetas: zetas.to_vec(),
        exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::{sfar_params_for_snr, sfar_spectrum, SfarParams};
    use approx::assert_relative_eq;

    #[test]
    fn integrand_examples() {
        assert_eq!(integrand(0.0, 1.0), 0.0);
        let v = integrand(1.0 / FOUR_PI2, 1.0);
        let expected = 0.5 * 2f64.ln() + 0.25 - 0.5;
        assert_relative_eq!(v, expected, max_relative = 1e-14);
        assert_relative_eq!(v, 0.096_573_6, max_relative = 1e-6);
        assert_eq!(integrand(f64::INFINITY, 1.0), f64::INFINITY);
    }

    #[test]
    fn small_ratio_series_is_continuous() {
        let direct = |x: f64| 0.5 * (x.ln_1p() - x / (1.0 + x));
        for &x in &[0.9e-3, 1.1e-3] {
            assert_relative_eq!(gaussian_kl_ratio(x), direct(x), max_relative = 1e-9);
        }
        assert_relative_eq!(gaussian_kl_ratio(1e-8), 0.25e-16, max_relative = 1e-6);
    }

    #[test]
    fn stein_closed_form_for_iid_field() {
        let spec = sfar_spectrum(SfarParams::new(0.5, 0.0, 0.3).unwrap());
        let r = error_exponent(&spec, 0.3, 64).unwrap();
        let s = crate::gmrf::snr(&SfarParams::new(0.5, 0.0, 0.3).unwrap());
        assert_relative_eq!(r.value, stein_exponent(s), max_relative = 1e-12);
        assert!(r.error_estimate < 1e-14);
        let r = sfar_error_exponent(1.0, 0.0, 64).unwrap();
        assert!((r.value - (0.5 * 2f64.ln() - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn sfar_route_matches_general_route() {
        for &(snr, zeta) in &[(1.0, 0.1), (10.0, 0.2), (0.3, 0.24), (100.0, 0.05)] {
            let direct = sfar_error_exponent(snr, zeta, 128).unwrap();
            let params = sfar_params_for_snr(snr, zeta, 1.0).unwrap();
            let general = error_exponent(&sfar_spectrum(params), 1.0, 128).unwrap();
            assert!((direct.value - general.value).abs() <= 1e-12, "{snr} {zeta}");
        }
    }

    #[test]
    fn perfectly_correlated_gives_zero() {
        let r = sfar_error_exponent(1.0, 0.25, 64).unwrap();
        assert_eq!(r.value, 0.0);
        // the general route never samples the pole and sees zero signal elsewhere too
        let spec = sfar_spectrum(SfarParams::new(1.0, 0.25, 1.0).unwrap());
        let g = error_exponent(&spec, 1.0, 64).unwrap();
        assert!(g.value.is_finite());
    }

    #[test]
    fn exponent_decays_toward_perfect_correlation() {
        // K_s -> 0 only like 1/ln^2(1/(1 - 4 zeta)); check the ordering along the approach
        let mut prev = sfar_error_exponent(1.0, 0.0, 256).unwrap().value;
        for &gap in &[1e-1, 1e-3, 1e-6, 1e-10, 1e-15] {
            let zeta = 0.25 * (1.0 - gap);
            let v = sfar_error_exponent(1.0, zeta, 256).unwrap().value;
            assert!(v < prev, "gap {gap}: {v} !< {prev}");
            prev = v;
        }
    }

    #[test]
    fn tiny_snr_is_undetectable() {
        let r = sfar_error_exponent(1e-12, 0.0, 16).unwrap();
        assert!(r.value >= 0.0 && r.value < 1e-24);
    }

    #[test]
    fn high_snr_prefers_independent_samples() {
        let a = sfar_error_exponent(10.0, 0.0, 256).unwrap().value;
        let b = sfar_error_exponent(10.0, 0.15, 256).unwrap().value;
        assert!(a > b);
    }

    #[test]
    fn grid_validation() {
        assert!(sfar_error_exponent(1.0, 0.1, 6).is_err());
        assert!(sfar_error_exponent(1.0, 0.1, 65).is_err());
        assert!(sfar_error_exponent(1.0, 0.3, 64).is_err());
        assert!(sfar_error_exponent(-1.0, 0.1, 64).is_err());
        let spec = sfar_spectrum(SfarParams::new(1.0, 0.1, 1.0).unwrap());
        assert!(error_exponent(&spec, 0.0, 64).is_err());
        assert!(finite_lattice_kl_rate(&spec, 1.0, 1).is_err());
    }

    #[test]
    fn finite_rate_iid_is_stein_for_every_side() {
        let params = sfar_params_for_snr(2.5, 0.0, 1.0).unwrap();
        for side in [2, 3, 5, 16] {
            let r = finite_lattice_kl_rate(&sfar_spectrum(params), 1.0, side).unwrap();
            assert_relative_eq!(r.value, stein_exponent(2.5), max_relative = 1e-13);
        }
    }

    #[test]
    fn finite_rate_two_by_two_hand_sum() {
        let params = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let spec = sfar_spectrum(params);
        let kappa = params.kappa();
        // eigen-frequencies {0, pi}^2: symbols 1 - 0.2(+-1 +-1)
        let hand: f64 = [0.6, 1.0, 1.0, 1.4]
            .iter()
            .map(|d| {
                let s1 = 1.0 + 1.0 / (kappa * d);
                0.5 * s1.ln() + 0.5 / s1 - 0.5
            })
            .sum::<f64>()
            / 4.0;
        let r = finite_lattice_kl_rate(&spec, 1.0, 2).unwrap();
        assert_relative_eq!(r.value, hand, max_relative = 1e-13);
    }

    #[test]
    fn finite_rate_close_to_quadrature() {
        let spec = sfar_spectrum(sfar_params_for_snr(1.0, 0.1, 1.0).unwrap());
        let rate = finite_lattice_kl_rate(&spec, 1.0, 256).unwrap();
        let quad = error_exponent(&spec, 1.0, 256).unwrap();
        assert!((rate.value - quad.value).abs() <= 1e-3);
    }

    #[test]
    fn finite_rate_flags_pole() {
        let spec = sfar_spectrum(SfarParams::new(1.0, 0.25, 1.0).unwrap());
        let r = finite_lattice_kl_rate(&spec, 1.0, 8).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn zeta_grid_includes_upper_end() {
        let z = uniform_zeta_grid(0.005, 0.2499).unwrap();
        assert_eq!(z[0], 0.0);
        assert_eq!(z[1], 0.005);
        assert_eq!(*z.last().unwrap(), 0.2499);
        assert_eq!(z[z.len() - 2], 0.245);
        assert_eq!(z.len(), 51);
        let z = uniform_zeta_grid(0.05, 0.25).unwrap();
        assert_eq!(z, vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25]);
    }

    #[test]
    fn dft_frequencies_fold_into_half_open_interval() {
        let f = dft_frequencies(4);
        assert_eq!(f, vec![0.0, PI / 2.0, PI, -PI / 2.0]);
    }
}
