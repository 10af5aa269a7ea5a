use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hermitian eigensolver did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("matrix is not Hermitian: entry ({row}, {col}) deviates from the conjugate transpose by {deviation:e}")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("spectral function is not finite at eigenvalue {eigenvalue:e}")]
    NonFiniteSpectralValue { eigenvalue: f64 },

    #[error("log-determinant unavailable: {0}; try a smaller alpha range")]
    Determinant(String),

    #[error("matrix is singular or too far from unitary (|u*u - 1| = {0:e})")]
    NotNearlyUnitary(f64),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("chain length L must be at least 1")]
    EmptyChain,

    #[error(
        "L = {l} exceeds the oracle cap of {cap}: dense operators would need about {bytes} bytes"
    )]
    OracleTooLarge { l: usize, cap: usize, bytes: u128 },

    #[error("initial state does not commute with the measured Hamiltonian (residual {0:e})")]
    NonCommuting(f64),

    #[error("independent evaluations disagree at alpha = {alpha}: {first} vs {second}")]
    Inconsistent { alpha: f64, first: f64, second: f64 },

    #[error(
        "propagator drifted from unitarity by {drift:e} (limit {limit:e}); increase the step count"
    )]
    Drift { drift: f64, limit: f64 },

    #[error("Renyi order {0} outside (0, 1]")]
    RenyiOrder(f64),

    #[error("success probability {0:e} is too small to condition on")]
    VanishingSuccess(f64),

    #[error("finite-difference stencil unavailable: {0}")]
    Stencil(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
