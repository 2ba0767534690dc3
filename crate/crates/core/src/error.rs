use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("query {value} outside curve domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },
    #[error("removal of mass fraction {requested} on [{lo}, {hi}] exceeds the available mass")]
    RemovalExceedsMass { lo: f64, hi: f64, requested: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("aggregate ability distribution is not uniform (sup deviation {deviation:.3e})")]
    NonUniformAggregate { deviation: f64 },
    #[error("invalid grading policy: {0}")]
    InvalidPolicy(String),
    #[error("mass mismatch between students ({students}) and jobs ({jobs})")]
    MassMismatch { students: f64, jobs: f64 },
    #[error("equilibrium sweep failed: {0}")]
    SweepFailed(String),
    #[error("early-contracting solver failed: {0}")]
    EarlySolverFailed(String),
    #[error("degenerate equilibrium welfare {0:.3e}")]
    DegenerateWelfare(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
