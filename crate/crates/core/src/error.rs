use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state is not normalized: norm² = {norm_sq:.3e} (tolerance {tol:.1e})")]
    Normalization { norm_sq: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("matrix is not Hermitian: max |M - M†| = {deviation:.3e} (tolerance {tol:.1e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix is not unitary: max |U†U - I| = {deviation:.3e} (tolerance {tol:.1e})")]
    NotUnitary { deviation: f64, tol: f64 },

    #[error("density matrix invalid: {0}")]
    InvalidState(String),

    #[error("canonical decomposition failed: {0}")]
    Decomposition(String),

    #[error(
        "product-state construction failed: lambdas={lambdas:?} v={v:?} \
         input residual={input_residual:.3e} output residual={output_residual:.3e}"
    )]
    Construction {
        lambdas: [f64; 4],
        v: [f64; 4],
        input_residual: f64,
        output_residual: f64,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical
    /// construction or convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Decomposition(_) | Error::Construction { .. } | Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
