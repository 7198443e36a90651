use thiserror::Error;

/// Errors raised by the beamforming library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("too many relays for vertex enumeration: {0} (max 16)")]
    TooManyRelays(usize),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("special-case source vector does not apply: {0}")]
    CaseMismatch(String),

    #[error("conic solver did not converge after {iterations} iterations (gap {gap:.3e}, pres {pres:.3e}, dres {dres:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        gap: f64,
        pres: f64,
        dres: f64,
    },

    #[error("conic problem is infeasible (certificate residual {residual:.3e})")]
    Infeasible { residual: f64, certificate: Vec<f64> },

    #[error("conic problem is unbounded (certificate residual {residual:.3e})")]
    Unbounded { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Dinkelbach iteration did not converge in {iterations} iterations (last residual {last_residual:.3e})")]
    DinkelbachCap {
        iterations: usize,
        last_residual: f64,
        history: Vec<(f64, f64)>,
    },

    #[error("invalid bisection bracket: {0}")]
    InvalidBracket(String),

    #[error("polyblock invariant violated: {0}")]
    PolyblockInvariant(String),

    #[error("experiment aborted: {failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("experiment spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
