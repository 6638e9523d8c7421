use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the mathematical domain of the operation.
    #[error("{name} = {value} is out of range: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A structural argument (grid size, lattice side, trial count, ...) is unusable.
    #[error("invalid {name}: {reason}")]
    Usage { name: &'static str, reason: String },

    #[error(
        "CAR coefficients give a non-positive spectral symbol {symbol:e} at (w1, w2) = ({omega1:.6}, {omega2:.6})"
    )]
    NonPositiveSpectrum {
        omega1: f64,
        omega2: f64,
        symbol: f64,
    },

    #[error("CAR coefficients are not symmetric: theta({i},{j}) = {a} but theta({ni},{nj}) = {b}", ni = -i, nj = -j)]
    AsymmetricCoefficients { i: i32, j: i32, a: f64, b: f64 },

    /// The torus precision has a zero eigenvalue (zeta = 1/4).
    #[error("precision operator is singular at zeta = 1/4; the zero-frequency mode has infinite variance")]
    SingularPrecision,

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn usage(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Usage {
        name,
        reason: reason.into(),
    }
}
