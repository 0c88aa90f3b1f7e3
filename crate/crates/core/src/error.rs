use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Fock cutoff {n_max} inadequate, need at least {required}")]
    TruncationInadequate { n_max: usize, required: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("steady state is not unique: {0} near-zero pivots in the Liouvillian factorization")]
    DegenerateSteadyState(usize),

    #[error("RK4 step size too large: {0}")]
    StepSize(String),

    #[error("Husimi mass deficit {:.3e} exceeds {tol:.1e}; grid does not capture the state", 1.0 - mass)]
    MassDeficit { mass: f64, tol: f64 },

    #[error("quadrature failure: imaginary residue {residue:.3e} of a real integral")]
    Quadrature { residue: f64 },

    #[error("singular expansion: term h[{r},{s}] needs a negative power of alpha = 0")]
    SingularExpansion { r: u32, s: u32 },

    #[error("singular Holstein-Primakoff branch: beta_tilde_plus vanishes")]
    SingularBranch,

    #[error("drift matrix is not Hurwitz: eigenvalue {re:.3e}{im:+.3e}i")]
    Unstable { re: f64, im: f64 },

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}
