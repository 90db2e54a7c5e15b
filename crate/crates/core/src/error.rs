use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The surface normal is not an eigenvector of the tensor.
    #[error("tensor is not representable in the frame: |Q nu - beta nu| = {residual:.3e}")]
    NotRepresentable { residual: f64 },

    #[error("no nematic minimum: B^2 - 24A = {discriminant} < 0")]
    NoNematicMinimum { discriminant: f64 },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("s = {s} outside the profile domain [{lo}, {hi}]")]
    OutOfRange { s: f64, lo: f64, hi: f64 },

    #[error("normal map folds: eps = {eps} exceeds the invertibility bound {bound}")]
    Fold { eps: f64, bound: f64 },

    #[error("degree undefined: min |p| = {min_modulus:.3e} on the circle is below {tol:.3e}")]
    UndefinedDegree { min_modulus: f64, tol: f64 },

    #[error("no sign change of the sector gap on [{lo}, {hi}] (values {f_lo:.6}, {f_hi:.6})")]
    Bracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("field violates the leading-order anchoring: max f_s0 = {max_violation:.3e}")]
    Inadmissible { max_violation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
