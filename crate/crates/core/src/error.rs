use thiserror::Error;

/// Errors produced anywhere in the simulation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative discriminant {discriminant:.3e}: omega = {omega}, p = {p}, gamma_minus = {gamma_minus} is unphysical")]
    NegativeDiscriminant {
        p: f64,
        omega: f64,
        gamma_minus: f64,
        discriminant: f64,
    },

    #[error("coherent drive alone exceeds target p = {p} (omega = {omega}, gamma_minus = {gamma_minus}); excitation rate would be {gamma_plus:.3e}")]
    NegativeRate {
        p: f64,
        omega: f64,
        gamma_minus: f64,
        gamma_plus: f64,
    },

    #[error("target probability p = 1 requires an unbounded excitation rate")]
    DegenerateP,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix exponential is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("bond dimension must be at least 1 (got {0})")]
    BondOverflow(usize),

    #[error("SVD failed on bond {bond}: {reason}")]
    SvdFailure { bond: usize, reason: String },

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("null space has dimension {dimension} (tolerance {tolerance:.1e}); refusing to pick a steady state")]
    DegenerateNullSpace { dimension: usize, tolerance: f64 },

    #[error("dense oracle supports at most {max} qubits (requested {requested})")]
    DimensionOverflow { requested: usize, max: usize },

    #[error("two-site state is not physical: minimum eigenvalue {0:.3e}")]
    NonPhysicalInput(f64),

    #[error("no curvature sign change across the sweep")]
    NoSignChange,

    #[error("tail window holds {available} points, need at least {required}")]
    InsufficientTail { available: usize, required: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed binary dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
