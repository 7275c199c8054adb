use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rollout: trajectory has no steps")]
    DegenerateRollout,
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),
    #[error("action has zero probability under the policy ({0})")]
    ZeroProbability(String),
    #[error("impossible trajectory: {0}")]
    ImpossibleTrajectory(String),
    #[error("enumeration would produce {terms:.3e} terms (limit {limit:.0e}); use a smaller oracle MDP")]
    EnumerationTooLarge { terms: f64, limit: f64 },
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty trajectory batch")]
    EmptyBatch,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("parameters became non-finite at epoch {epoch}, iteration {iter}: {dump}")]
    Diverged { epoch: usize, iter: usize, dump: String },
    #[error("absolute continuity violated: reference assigns mass where the sampling distribution has none")]
    AbsoluteContinuity,
    #[error("missing metrics files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
