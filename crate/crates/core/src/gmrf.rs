//! Field models: SFAR parameters, general CAR coefficients and their spectral densities.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{midpoint_nodes, DEFAULT_GRID};
use crate::special::elliptic_k_unchecked;

pub(crate) const FOUR_PI2: f64 = 4.0 * PI * PI;

/// Largest edge dependence factor; the field is perfectly correlated there.
pub const ZETA_MAX: f64 = 0.25;

/// Symmetric first-order autoregression: conditional precision `kappa`, equal
/// coupling `lambda = zeta * kappa` to the four lattice neighbours, observed in
/// white noise of variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSfarParams")]
pub struct SfarParams {
    kappa: f64,
    zeta: f64,
    sigma2: f64,
}

#[derive(Deserialize)]
struct RawSfarParams {
    kappa: f64,
    zeta: f64,
    sigma2: f64,
}

impl TryFrom<RawSfarParams> for SfarParams {
    type Error = Error;

    fn try_from(raw: RawSfarParams) -> Result<Self> {
        SfarParams::new(raw.kappa, raw.zeta, raw.sigma2)
    }
}

impl SfarParams {
    pub fn new(kappa: f64, zeta: f64, sigma2: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain {
                name: "kappa",
                value: kappa,
                reason: "conditional precision must be positive and finite",
            });
        }
        if !(0.0..=ZETA_MAX).contains(&zeta) {
            return Err(Error::Domain {
                name: "zeta",
                value: zeta,
                reason: "edge dependence factor must lie in [0, 1/4]",
            });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain {
                name: "sigma2",
                value: sigma2,
                reason: "noise variance must be positive and finite",
            });
        }
        Ok(Self {
            kappa,
            zeta,
            sigma2,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Neighbour coupling `lambda = zeta * kappa`.
    pub fn lambda(&self) -> f64 {
        self.zeta * self.kappa
    }

    pub fn is_perfectly_correlated(&self) -> bool {
        self.zeta == ZETA_MAX
    }

    /// `1 - 2 zeta cos w1 - 2 zeta cos w2`, the SFAR symbol divided by kappa.
    pub(crate) fn normalized_symbol(&self, omega1: f64, omega2: f64) -> f64 {
        1.0 - 2.0 * self.zeta * (omega1.cos() + omega2.cos())
    }
}

/// Finite set of CAR weights `theta_ij`, indexed by lattice offset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarCoefficients {
    theta: BTreeMap<(i32, i32), f64>,
}

impl CarCoefficients {
    /// Validates symmetry, `theta_00 > 0`, and positivity of the spectral
    /// symbol on the default quadrature grid.
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((i32, i32), f64)>,
    {
        Self::with_check_grid(entries, DEFAULT_GRID)
    }

    /// Like [`CarCoefficients::new`] with the positivity check run on a
    /// `grid x grid` midpoint lattice.
    pub fn with_check_grid<I>(entries: I, grid: usize) -> Result<Self>
    where
        I: IntoIterator<Item = ((i32, i32), f64)>,
    {
        let mut theta = BTreeMap::new();
        for (offset, value) in entries {
            if !value.is_finite() {
                return Err(Error::Domain {
                    name: "theta",
                    value,
                    reason: "CAR weights must be finite",
                });
            }
            if value != 0.0 {
                *theta.entry(offset).or_insert(0.0) += value;
            }
        }
        let center = theta.get(&(0, 0)).copied().unwrap_or(0.0);
        if center <= 0.0 {
            return Err(Error::Domain {
                name: "theta_00",
                value: center,
                reason: "the conditional precision must be positive",
            });
        }
        for (&(i, j), &a) in &theta {
            let b = theta.get(&(-i, -j)).copied().unwrap_or(0.0);
            if a != b {
                return Err(Error::AsymmetricCoefficients { i, j, a, b });
            }
        }
        let coeffs = Self { theta };
        if grid == 0 {
            return Err(crate::error::usage("grid", "positivity check grid must be non-empty"));
        }
        let nodes = midpoint_nodes(grid);
        for &w1 in &nodes {
            for &w2 in &nodes {
                let symbol = coeffs.symbol(w1, w2);
                if !(symbol > 0.0) {
                    return Err(Error::NonPositiveSpectrum {
                        omega1: w1,
                        omega2: w2,
                        symbol,
                    });
                }
            }
        }
        Ok(coeffs)
    }

    /// The SFAR stencil written as CAR weights.
    pub fn from_sfar(params: &SfarParams) -> Result<Self> {
        let l = params.lambda();
        Self::new([
            ((0, 0), params.kappa()),
            ((1, 0), -l),
            ((-1, 0), -l),
            ((0, 1), -l),
            ((0, -1), -l),
        ])
    }

    pub fn get(&self, i: i32, j: i32) -> f64 {
        self.theta.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((i32, i32), f64)> + '_ {
        self.theta.iter().map(|(&k, &v)| (k, v))
    }

    /// `sum theta_ij exp(-i(i w1 + j w2))`, real because the weights are symmetric.
    pub fn symbol(&self, omega1: f64, omega2: f64) -> f64 {
        self.theta
            .iter()
            .map(|(&(i, j), &t)| t * (i as f64 * omega1 + j as f64 * omega2).cos())
            .sum()
    }
}

/// Spectral density `f(w1, w2)` of a stationary CAR field on `(-pi, pi]^2`.
///
/// Values are non-negative and may be `+inf` at an isolated pole (the SFAR
/// field at `zeta = 1/4` has one at the origin).
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFn {
    Sfar(SfarParams),
    Car(CarCoefficients),
}

impl SpectrumFn {
    pub fn eval(&self, omega1: f64, omega2: f64) -> f64 {
        let symbol = match self {
            SpectrumFn::Sfar(p) => p.kappa() * p.normalized_symbol(omega1, omega2),
            SpectrumFn::Car(c) => c.symbol(omega1, omega2),
        };
        if symbol <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / (FOUR_PI2 * symbol)
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SpectrumFn::Sfar(_) => "sfar",
            SpectrumFn::Car(_) => "car",
        }
    }
}

pub fn sfar_spectrum(params: SfarParams) -> SpectrumFn {
    SpectrumFn::Sfar(params)
}

/// Marginal variance `gamma_00 = 2 K(4 zeta) / (pi kappa)` of the SFAR field
/// on the infinite lattice; `+inf` at `zeta = 1/4`.
pub fn signal_power(params: &SfarParams) -> f64 {
    2.0 * elliptic_k_unchecked(4.0 * params.zeta()) / (PI * params.kappa())
}

pub fn snr(params: &SfarParams) -> f64 {
    signal_power(params) / params.sigma2()
}

/// Chooses `kappa` so that the SFAR field with edge dependence `zeta` has the
/// requested SNR against noise variance `sigma2`.
pub fn sfar_params_for_snr(target_snr: f64, zeta: f64, sigma2: f64) -> Result<SfarParams> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::Domain {
            name: "snr",
            value: target_snr,
            reason: "SNR must be positive and finite",
        });
    }
    if !(0.0..ZETA_MAX).contains(&zeta) {
        return Err(Error::Domain {
            name: "zeta",
            value: zeta,
            reason: "zeta must lie in [0, 1/4) for a finite signal power",
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain {
            name: "sigma2",
            value: sigma2,
            reason: "noise variance must be positive and finite",
        });
    }
    let kappa = 2.0 * elliptic_k_unchecked(4.0 * zeta) / (PI * sigma2 * target_snr);
    SfarParams::new(kappa, zeta, sigma2)
}
