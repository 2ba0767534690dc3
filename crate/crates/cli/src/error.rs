use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("{0}")]
    Solver(gradeq_core::Error),
    #[error("verification failed: {}", .0.join(", "))]
    Verification(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<gradeq_core::Error> for CliError {
    fn from(e: gradeq_core::Error) -> Self {
        use gradeq_core::Error as E;
        match e {
            E::SweepFailed(_) | E::EarlySolverFailed(_) | E::DegenerateWelfare(_) | E::RemovalExceedsMass { .. } => {
                CliError::Solver(e)
            }
            other => CliError::Validation { path: "scenario".into(), message: other.to_string() },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
