//! Neyman-Pearson detection of the hidden SFAR field on the torus.
//!
//! Both hypotheses are zero-mean Gaussians diagonalised by the orthonormal 2D
//! DFT: under H0 every frequency has variance `sigma2`, under H1 it has
//! `s_kl = sigma2 + 1/Lambda_kl`. The log-likelihood ratio is therefore
//!
//! ```text
//! log p1(y)/p0(y) = 1/2 sum_kl [ log(sigma2/s_kl) + |y_kl|^2 (1/sigma2 - 1/s_kl) ]
//! ```
//!
//! Monte Carlo trials derive their own seeds from `(seed, experiment, trial)`
//! and are reduced in trial order, so results do not depend on thread count.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::fft::Fft2;
use crate::field::{dense_covariances, derive_seed, torus_precision_spectrum, Hypothesis, TorusField, TorusSampler};
use crate::gmrf::SfarParams;
use crate::numeric::{compensated_sum, mean_std, quantile_sorted, wilson_half_width, CompensatedSum};

pub const MIN_TRIALS: usize = 100;

const DOMAIN_CALIBRATE: u64 = 0x0ca1;
const DOMAIN_H0: u64 = 0x0e00;
const DOMAIN_H1: u64 = 0x0e01;
const DOMAIN_CONVERGENCE: u64 = 0xc0_0000;
const DOMAIN_TILTED: u64 = 0x7117;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LlrStatistic {
    /// `log p1(y) - log p0(y)`.
    pub value: f64,
    /// `value / N^2`.
    pub normalized: f64,
}

/// Precomputed frequency-domain LLR for one `(params, N)` pair.
#[derive(Debug, Clone)]
pub struct LikelihoodRatio {
    params: SfarParams,
    fft: Fft2,
    constant: f64,
    weights: Vec<f64>,
    h1_variances: Vec<f64>,
}

impl LikelihoodRatio {
    pub fn new(params: &SfarParams, side: usize) -> Result<Self> {
        let spectrum = torus_precision_spectrum(params, side)?;
        if spectrum.is_singular() {
            return Err(Error::SingularPrecision);
        }
        let s2 = params.sigma2();
        let signal = spectrum.covariance_eigenvalues();
        let constant = -0.5 * compensated_sum(signal.iter().map(|c| (c / s2).ln_1p()));
        let weights = signal.iter().map(|c| 0.5 * c / (s2 * (s2 + c))).collect();
        let h1_variances = signal.iter().map(|c| s2 + c).collect();
        Ok(Self {
            params: *params,
            fft: Fft2::new(side),
            constant,
            weights,
            h1_variances,
        })
    }

    pub fn side(&self) -> usize {
        self.fft.side()
    }

    pub fn params(&self) -> &SfarParams {
        &self.params
    }

    /// H1 covariance eigenvalues `s_kl`, indexed `[k * N + l]`.
    pub fn h1_variances(&self) -> &[f64] {
        &self.h1_variances
    }

    pub fn evaluate(&self, y: &[f64]) -> LlrStatistic {
        let n = self.side();
        assert_eq!(y.len(), n * n, "observation does not match the lattice side");
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        let mut acc = CompensatedSum::new();
        acc.add(self.constant);
        for (z, w) in buf.iter().zip(&self.weights) {
            acc.add(w * z.norm_sqr());
        }
        let value = acc.value();
        LlrStatistic {
            value,
            normalized: value / (n * n) as f64,
        }
    }

    pub fn evaluate_field(&self, field: &TorusField) -> Result<LlrStatistic> {
        if field.side() != self.side() {
            return Err(usage(
                "observation",
                format!("side {} does not match detector side {}", field.side(), self.side()),
            ));
        }
        Ok(self.evaluate(field.values()))
    }

    /// Exact `E_H0[-LLR] / N^2`, the torus Kullback-Leibler rate `D(p0 || p1) / N^2`.
    pub fn kl_rate(&self) -> f64 {
        let s2 = self.params.sigma2();
        let n2 = self.h1_variances.len() as f64;
        compensated_sum(
            self.h1_variances
                .iter()
                .map(|s| crate::exponent::gaussian_kl_ratio(s / s2 - 1.0)),
        ) / n2
    }
}

pub fn llr(observation: &TorusField, params: &SfarParams) -> Result<LlrStatistic> {
    LikelihoodRatio::new(params, observation.side())?.evaluate_field(observation)
}

/// LLR through dense covariance matrices and a Cholesky factorisation.
/// Independent of the FFT route; limited to small lattices.
pub fn dense_llr(y: &[f64], params: &SfarParams, side: usize) -> Result<f64> {
    let (_, sigma1) = dense_covariances(params, side)?;
    let dim = side * side;
    if y.len() != dim {
        return Err(usage("observation", format!("expected {dim} entries, got {}", y.len())));
    }
    let chol = sigma1.cholesky().ok_or(Error::SingularPrecision)?;
    let logdet1: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let logdet0 = dim as f64 * params.sigma2().ln();
    let yv = nalgebra::DVector::from_column_slice(y);
    let quad1 = yv.dot(&chol.solve(&yv));
    let quad0 = yv.dot(&yv) / params.sigma2();
    Ok(0.5 * (logdet0 - logdet1) + 0.5 * (quad0 - quad1))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(usage("trials", format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
            reason: "detector level must lie strictly between 0 and 1",
        });
    }
    Ok(())
}

fn llr_draws(
    sampler: &TorusSampler,
    detector: &LikelihoodRatio,
    hypothesis: Hypothesis,
    trials: usize,
    seed: u64,
    domain: u64,
) -> Vec<f64> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let y = sampler.observation(hypothesis, derive_seed(seed, domain, t));
            detector.evaluate(y.values()).value
        })
        .collect()
}

/// Empirical `(1 - alpha)` quantile of the H0 LLR over `trials` draws.
pub fn calibrate_threshold(params: &SfarParams, side: usize, alpha: f64, trials: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    check_trials(trials)?;
    let detector = LikelihoodRatio::new(params, side)?;
    let sampler = TorusSampler::new(*params, side)?;
    let mut draws = llr_draws(&sampler, &detector, Hypothesis::H0, trials, seed, DOMAIN_CALIBRATE);
    draws.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&draws, 1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRates {
    pub p_false_alarm: f64,
    /// 95% Wilson half-width.
    pub p_false_alarm_ci: f64,
    pub p_miss: f64,
    pub p_miss_ci: f64,
    pub trials: usize,
}

/// LLR values of independent H0 and H1 draws.
#[derive(Debug, Clone)]
pub struct LlrSamples {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

impl LlrSamples {
    pub fn draw(params: &SfarParams, side: usize, trials: usize, seed: u64) -> Result<Self> {
        let detector = LikelihoodRatio::new(params, side)?;
        let sampler = TorusSampler::new(*params, side)?;
        Ok(Self {
            h0: llr_draws(&sampler, &detector, Hypothesis::H0, trials, seed, DOMAIN_H0),
            h1: llr_draws(&sampler, &detector, Hypothesis::H1, trials, seed, DOMAIN_H1),
        })
    }

    /// False alarm: H0 draw with LLR above the threshold. Miss: H1 draw at or below it.
    pub fn rates_at(&self, threshold: f64) -> ErrorRates {
        let fa = self.h0.iter().filter(|&&v| v > threshold).count();
        let miss = self.h1.iter().filter(|&&v| v <= threshold).count();
        ErrorRates {
            p_false_alarm: fa as f64 / self.h0.len() as f64,
            p_false_alarm_ci: wilson_half_width(fa, self.h0.len()),
            p_miss: miss as f64 / self.h1.len() as f64,
            p_miss_ci: wilson_half_width(miss, self.h1.len()),
            trials: self.h0.len(),
        }
    }
}

pub fn estimate_error_probabilities(
    params: &SfarParams,
    side: usize,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> Result<ErrorRates> {
    check_trials(trials)?;
    Ok(LlrSamples::draw(params, side, trials, seed)?.rates_at(threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub side: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub p_false_alarm: f64,
    pub p_false_alarm_ci: f64,
    pub p_miss: f64,
    pub p_miss_ci: f64,
    pub trials: usize,
    pub seed: u64,
    pub kappa: f64,
    pub zeta: f64,
    pub sigma2: f64,
}

/// Calibrates the level-`alpha` threshold and estimates both error
/// probabilities on fresh draws.
pub fn detect(params: &SfarParams, side: usize, alpha: f64, trials: usize, seed: u64) -> Result<DetectionReport> {
    let threshold = calibrate_threshold(params, side, alpha, trials, seed)?;
    let rates = estimate_error_probabilities(params, side, threshold, trials, seed)?;
    Ok(DetectionReport {
        side,
        alpha,
        threshold,
        p_false_alarm: rates.p_false_alarm,
        p_false_alarm_ci: rates.p_false_alarm_ci,
        p_miss: rates.p_miss,
        p_miss_ci: rates.p_miss_ci,
        trials,
        seed,
        kappa: params.kappa(),
        zeta: params.zeta(),
        sigma2: params.sigma2(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub side: usize,
    /// Monte Carlo mean of `-(1/N^2) log p1/p0` under H0.
    pub mean: f64,
    pub std: f64,
    pub std_error: f64,
    /// Exact expectation of the statistic on the torus.
    pub finite_rate: f64,
}

/// Per-side mean and spread of the normalised H0 log-likelihood ratio.
pub fn normalized_llr_convergence(
    params: &SfarParams,
    sides: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if trials < 2 {
        return Err(usage("trials", "need at least two trials for a spread"));
    }
    if sides.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("sides", "lattice sides must be strictly ascending"));
    }
    sides
        .iter()
        .map(|&side| {
            let detector = LikelihoodRatio::new(params, side)?;
            let sampler = TorusSampler::new(*params, side)?;
            let stats: Vec<f64> = llr_draws(
                &sampler,
                &detector,
                Hypothesis::H0,
                trials,
                seed,
                DOMAIN_CONVERGENCE + side as u64,
            )
            .into_iter()
            .map(|v| -v / (side * side) as f64)
            .collect();
            let (mean, std) = mean_std(&stats);
            Ok(ConvergenceRow {
                side,
                mean,
                std,
                std_error: std / (trials as f64).sqrt(),
                finite_rate: detector.kl_rate(),
            })
        })
        .collect()
}

/// Importance-sampling estimate of the miss probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedMissEstimate {
    pub p_miss: f64,
    pub std_error: f64,
    /// Tilt `t`; draws come from `q_t ∝ p1^{1-t} p0^t`.
    pub tilt: f64,
    pub trials: usize,
}

/// Estimates `P_H1(LLR <= threshold)` by drawing from the exponentially tilted
/// density `q_t ∝ p1 exp(-t LLR)` and reweighting with `M(t) exp(t LLR)`,
/// where `M(t) = E_p1[exp(-t LLR)]`.
///
/// `q_t` is again a torus Gaussian whose covariance eigenvalues are
/// `v = 1 / (1/s + t (1/sigma2 - 1/s))`; `t` is chosen so that the LLR mean
/// under `q_t` equals the threshold. Plain Monte Carlo cannot resolve the miss
/// probability once it falls far below `1/trials`; this estimator can.
pub fn estimate_miss_probability_tilted(
    params: &SfarParams,
    side: usize,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> Result<TiltedMissEstimate> {
    check_trials(trials)?;
    if !threshold.is_finite() {
        return Err(Error::Domain {
            name: "threshold",
            value: threshold,
            reason: "tilted estimation needs a finite threshold",
        });
    }
    let detector = LikelihoodRatio::new(params, side)?;
    let sampler = TorusSampler::new(*params, side)?;
    let s2 = params.sigma2();
    let s = detector.h1_variances();
    // LLR = constant + sum w_k u_k^2 with w_k = (1/s2 - 1/s_k)/2
    let w: Vec<f64> = s.iter().map(|sk| 0.5 * (1.0 / s2 - 1.0 / sk)).collect();
    let tilted_var = |t: f64| -> Vec<f64> { s.iter().zip(&w).map(|(sk, wk)| 1.0 / (1.0 / sk + 2.0 * t * wk)).collect() };
    let tilted_mean = |t: f64| -> f64 {
        let v = tilted_var(t);
        detector.constant + compensated_sum(w.iter().zip(&v).map(|(a, b)| a * b))
    };

    let tilt = if tilted_mean(0.0) <= threshold {
        0.0
    } else {
        let mut hi = 1.0;
        while tilted_mean(hi) > threshold {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Domain {
                    name: "threshold",
                    value: threshold,
                    reason: "below the infimum of the log-likelihood ratio",
                });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tilted_mean(mid) > threshold {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };

    let v = tilted_var(tilt);
    // log E_p1[exp(-t LLR)]
    let log_mgf = -tilt * detector.constant + 0.5 * compensated_sum(v.iter().zip(s).map(|(vk, sk)| (vk / sk).ln()));
    let terms: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let y = sampler.with_covariance(&v, derive_seed(seed, DOMAIN_TILTED, t));
            let l = detector.evaluate(y.values()).value;
            if l <= threshold {
                (log_mgf + tilt * l).exp()
            } else {
                0.0
            }
        })
        .collect();
    let (mean, std) = mean_std(&terms);
    Ok(TiltedMissEstimate {
        p_miss: mean,
        std_error: std / (trials as f64).sqrt(),
        tilt,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_observation;
    use crate::gmrf::sfar_params_for_snr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_observation_leaves_the_log_det_term() {
        let p = SfarParams::new(1.0, 0.1, 0.5).unwrap();
        let d = LikelihoodRatio::new(&p, 6).unwrap();
        let v = d.evaluate(&[0.0; 36]);
        let spec = torus_precision_spectrum(&p, 6).unwrap();
        let expected: f64 = spec.eigenvalues().iter().map(|l| 0.5 * (0.5 / (0.5 + 1.0 / l)).ln()).sum();
        assert!((v.value - expected).abs() < 1e-12);
        assert!(v.value < 0.0);
        assert_eq!(v.normalized, v.value / 36.0);
    }

    #[test]
    fn iid_llr_closed_form() {
        let (kappa, s2) = (2.0, 0.7);
        let p = SfarParams::new(kappa, 0.0, s2).unwrap();
        let y: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = llr(&TorusField::new(5, y.clone(), crate::field::FieldKind::Observation, 0, p).unwrap(), &p).unwrap();
        let s1 = s2 + 1.0 / kappa;
        let sum_sq: f64 = y.iter().map(|v| v * v).sum();
        let expected = 25.0 * 0.5 * (s2 / s1).ln() + 0.5 * (1.0 / s2 - 1.0 / s1) * sum_sq;
        assert!((got.value - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn frequency_and_dense_routes_agree() {
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for side in 2..=6 {
            let d = LikelihoodRatio::new(&p, side).unwrap();
            for _ in 0..10 {
                let y: Vec<f64> = (0..side * side).map(|_| rng.random_range(-3.0..3.0)).collect();
                let fast = d.evaluate(&y).value;
                let dense = dense_llr(&y, &p, side).unwrap();
                assert!((fast - dense).abs() <= 1e-9 * dense.abs().max(1e-300), "side {side}: {fast} vs {dense}");
            }
        }
    }

    #[test]
    fn singular_model_is_rejected() {
        let p = SfarParams::new(1.0, 0.25, 1.0).unwrap();
        assert!(matches!(LikelihoodRatio::new(&p, 4), Err(Error::SingularPrecision)));
    }

    #[test]
    fn side_mismatch_is_rejected() {
        let p = SfarParams::new(1.0, 0.1, 1.0).unwrap();
        let y = sample_observation(&p, 4, Hypothesis::H0, 1).unwrap();
        assert!(LikelihoodRatio::new(&p, 5).unwrap().evaluate_field(&y).is_err());
    }

    #[test]
    fn kl_rate_matches_finite_lattice_rate() {
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let d = LikelihoodRatio::new(&p, 16).unwrap();
        let r = crate::exponent::finite_lattice_kl_rate(&crate::gmrf::sfar_spectrum(p), 1.0, 16).unwrap();
        assert!((d.kl_rate() - r.value).abs() < 1e-14);
    }

    #[test]
    fn extreme_thresholds() {
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let r = estimate_error_probabilities(&p, 4, f64::NEG_INFINITY, 100, 1).unwrap();
        assert_eq!((r.p_false_alarm, r.p_miss), (1.0, 0.0));
        let r = estimate_error_probabilities(&p, 4, f64::INFINITY, 100, 1).unwrap();
        assert_eq!((r.p_false_alarm, r.p_miss), (0.0, 1.0));
    }

    #[test]
    fn median_threshold_is_the_sample_median() {
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let thr = calibrate_threshold(&p, 4, 0.5, 101, 9).unwrap();
        let d = LikelihoodRatio::new(&p, 4).unwrap();
        let sampler = TorusSampler::new(p, 4).unwrap();
        let mut draws = llr_draws(&sampler, &d, Hypothesis::H0, 101, 9, DOMAIN_CALIBRATE);
        draws.sort_by(f64::total_cmp);
        assert_eq!(thr, draws[50]);
    }

    #[test]
    fn argument_validation() {
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        assert!(calibrate_threshold(&p, 4, 0.0, 1000, 1).is_err());
        assert!(calibrate_threshold(&p, 4, 1.0, 1000, 1).is_err());
        assert!(calibrate_threshold(&p, 4, 0.1, 99, 1).is_err());
        assert!(normalized_llr_convergence(&p, &[8, 4], 10, 1).is_err());
        assert!(estimate_miss_probability_tilted(&p, 4, f64::NAN, 100, 1).is_err());
    }

    #[test]
    fn tilted_estimator_without_tilt_is_plain_monte_carlo() {
        // threshold above the H1 mean: tilt 0, weights 1
        let p = sfar_params_for_snr(1.0, 0.1, 1.0).unwrap();
        let est = estimate_miss_probability_tilted(&p, 4, 1e6, 200, 5).unwrap();
        assert_eq!(est.tilt, 0.0);
        assert!((est.p_miss - 1.0).abs() < 1e-12);
    }
}
