use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{file} row {row}: {msg}")]
    Row { file: String, row: usize, msg: String },

    #[error("residence {residence} is farther than {max_m} m from every road link")]
    Unmapped { residence: u64, max_m: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver stopped at node limit {0} without a proven optimum")]
    NodeLimit(usize),

    #[error("lazy cut oracle returned a cut that the candidate satisfies: {0}")]
    InvalidCut(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 validation, 3 infeasible model, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Row { .. }
            | Error::Unmapped { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Infeasible(_) | Error::NodeLimit(_) => 3,
            Error::InvalidCut(_) | Error::Invariant(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
