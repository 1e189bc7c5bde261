use thiserror::Error;

/// Errors produced by dataset construction, configuration checks, and solvers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("solver stopped after {epochs} epochs with gap {gap:.3e} (target {tol:.3e})")]
    NoConvergence { gap: f64, epochs: usize, tol: f64 },

    #[error("dual objective dropped by {drop:.3e} in round {round} with beta_k = 1")]
    DualDecrease { round: u32, drop: f64 },

    #[error("n = {n} exceeds the dense eigendecomposition cap {cap}; use the n_tilde upper bound instead")]
    EigenCap { n: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, CoreError>;
