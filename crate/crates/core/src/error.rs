use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ZF infeasible: cluster {cluster} has {users} users but only {antennas} antennas")]
    ZfInfeasible {
        cluster: usize,
        users: usize,
        antennas: usize,
    },

    #[error("ZF degenerate realization: Gram matrix condition number {0:.3e}")]
    ZfDegenerate(f64),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite objective value {value} at iteration {iteration}")]
    NonFiniteObjective { value: f64, iteration: usize },

    #[error("no valid trials at sweep point {point} ({scenario}, {mode})")]
    NoValidTrials {
        point: f64,
        scenario: String,
        mode: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
