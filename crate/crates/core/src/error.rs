use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 2")]
    GridSize(usize),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("product grid {n_points}^{n_steps} exceeds the {limit}-entry memory guard; lower --n or --grid")]
    MemoryGuard {
        n_steps: usize,
        n_points: usize,
        limit: usize,
    },

    #[error("index {index} out of range 0..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("depth mismatch: expected {expected}, got {got}")]
    Depth { expected: usize, got: usize },

    #[error("function has negative-frequency content {violation:e} (frequency {frequency})")]
    NotAnalytic { frequency: i64, violation: f64 },

    #[error(
        "input is not a Hardy martingale: step {step}, prefix {prefix}, violation {violation:e}"
    )]
    NotHardy {
        step: usize,
        prefix: usize,
        violation: f64,
    },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("input has nonzero mean {0:e}")]
    NonzeroMean(f64),

    #[error("Monte Carlo budget exhausted: {exited} of {paths} paths left the disk within {max_steps} steps")]
    Budget {
        exited: usize,
        paths: usize,
        max_steps: usize,
    },

    #[error("unknown check id `{0}`")]
    UnknownCheck(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
