use thiserror::Error;

/// Errors surfaced by the numerical routines.
///
/// Structural violations of a system (non-Hermitian `B`, indefinite `W`, ...) are
/// not errors; they are collected by [`crate::lattice::validate_system`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the domain [{start}, {end}]")]
    OutOfDomain { t: usize, start: usize, end: usize },

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("I - A({t}) is singular (smallest singular value {sigma:e})")]
    SingularTransfer { t: usize, sigma: f64 },

    #[error("shooting matrix singular between t1={t1} and s={s} (relative sigma {sigma:e})")]
    SingularShooting { t1: usize, s: usize, sigma: f64 },

    #[error("U({t}) is not invertible (relative sigma {sigma:e})")]
    SingularU { t: usize, sigma: f64 },

    #[error("basis is not dominant: tail norm {tail:e} exceeds {tol:e}")]
    NotDominant { tail: f64, tol: f64 },

    #[error("tail sum did not converge within the horizon (last-quarter change {change:e})")]
    TailNotConverged { change: f64 },

    #[error("sequence of two-point solutions is not convergent: {0}")]
    NonConvergent(String),

    #[error("matrix is not Hermitian (defect {0:e})")]
    NonHermitian(f64),

    #[error("trajectory is not admissible: {0}")]
    NotAdmissible(String),

    #[error("degenerate quadratic form: {0}")]
    DegenerateForm(String),

    #[error("deficiency count ambiguous: no spectral gap at the cut (ratio {ratio:e})")]
    AmbiguousCount { ratio: f64 },

    #[error("basis is rank deficient: {0}")]
    RankDeficient(String),

    #[error("pairing matrix is not constant (drift {0:e})")]
    NotConstant(f64),

    #[error("pairing matrix is not invertible (smallest singular value {0:e})")]
    NotInvertible(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("patch construction infeasible: {0}")]
    PatchInfeasible(String),

    #[error("trajectory is outside the maximal domain: {0}")]
    NotMaximalDomain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
