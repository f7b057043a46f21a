use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(
        "no (phase, kappa) on the search grid passes; best candidate theta={best_theta:.6}, \
         kappa={best_kappa}, margin={best_margin:.3e}"
    )]
    SearchFailure {
        best_theta: f64,
        best_kappa: f64,
        best_margin: f64,
    },

    #[error("enumeration needs {required} states but the budget is {budget}")]
    BudgetExceeded { required: f64, budget: u64 },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the `rmt` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Input(_)
            | Error::Validation(_)
            | Error::BudgetExceeded { .. }
            | Error::Json(_) => 2,
            Error::Numerical(_) | Error::Evaluation(_) | Error::SearchFailure { .. } => 3,
            Error::Trial { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Csv(_) => 4,
        }
    }

    /// Short machine-readable category, written into error records.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            3 => "numerical",
            _ => "io",
        }
    }
}
