//! Detection of hidden two-dimensional Gauss-Markov random fields.
//!
//! The crate covers four layers:
//!
//! * [`gmrf`]: SFAR / general CAR parameters, their spectral densities, and
//!   signal-power normalisation through the complete elliptic integral ([`special`]).
//! * [`exponent`]: the Neyman-Pearson miss-probability error exponent as a
//!   spectral integral, plus the finite-torus Kullback-Leibler rate.
//! * [`field`] and [`detector`]: circulant sampling of lattice fields and a
//!   frequency-domain log-likelihood-ratio detector used to check the exponent
//!   by simulation.
//! * [`energy`]: information-per-energy of a grid sensor network routing to a
//!   central fusion node with minimum-hop paths.

pub mod detector;
pub mod energy;
pub mod error;
pub mod exponent;
pub mod fft;
pub mod field;
pub mod gmrf;
pub mod numeric;
pub mod special;

pub use error::{Error, Result};
pub use gmrf::{CarCoefficients, SfarParams, SpectrumFn};
