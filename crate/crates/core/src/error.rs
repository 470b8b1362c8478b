use thiserror::Error;

/// One `(n, ρ_n)` entry of the approximating-sequence ladder.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ApproxStep {
    pub n: u32,
    pub rho: Vec<f64>,
    /// `|ρ_n − ρ_{n/2}|_∞`, absent for the first rung.
    pub cauchy_gap: Option<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid clock: {0}")]
    InvalidClock(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("unknown density family `{0}`")]
    UnknownFamily(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("density tail does not integrate the log; the raw measure (n = ∞) has no finite-log-value quadrature")]
    DivergentTail,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("constraint set is empty")]
    Infeasible,

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("unbounded increasing profit on segment {segment}")]
    Uip { segment: usize, witness: Vec<f64> },

    #[error("optimizer did not converge after {iterations} iterations (projected gradient norm {residual:e})")]
    NonConvergence { iterations: usize, residual: f64, last: Vec<f64> },

    #[error("approximating sequence did not settle by n = {n_max} on segment {segment}")]
    ApproximationNonconvergent { segment: usize, n_max: u32, trace: Vec<ApproxStep> },

    #[error("portfolio is not admissible: 1 + πᵀx = {0:e} for some atom")]
    Inadmissible(f64),

    #[error("wealth factor {factor:e} ≤ 0 on path {path} at step {step}")]
    Bankruptcy { path: usize, step: usize, factor: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("market is not singular: ψ-integral is finite on the whole horizon")]
    NotSingular,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        let (line, column) = (e.line(), e.column());
        let full = e.to_string();
        let suffix = format!(" at line {line} column {column}");
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        Error::Parse { line, column, message }
    }
}
