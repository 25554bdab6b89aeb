use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model spaces differ: {0} vs {1}")]
    SpaceMismatch(String, String),

    #[error("window too short: need {needed} steps, have {available}")]
    WindowTooShort { needed: usize, available: usize },

    #[error("invalid orbit window: {0}")]
    InvalidWindow(String),

    #[error("orbit defect {residual:e} exceeds tolerance {tolerance:e}")]
    OrbitDefect { residual: f64, tolerance: f64 },

    #[error("rank collapse: {0}")]
    RankCollapse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not hyperbolic enough: {0}")]
    NotHyperbolic(String),

    #[error("iterate left the admissible ball: {0}")]
    LeftBall(String),

    #[error("iteration diverged: {0}")]
    Divergence(String),

    #[error("displacement {0} is at least 1/4, exp^-1 is ambiguous")]
    Wraparound(f64),

    #[error("unsupported system: {0}")]
    Unsupported(String),

    #[error("coverage gap: {0}")]
    CoverageGap(String),

    #[error("ambiguous clustering: {0}")]
    AmbiguousClustering(String),

    #[error("filtration check failed: {0}")]
    Filtration(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
