use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("game specification is invalid ({} violation(s))", .0.len())]
    InvalidSpec(Vec<Violation>),

    #[error("malformed game document: {0}")]
    Document(String),

    #[error("no sojourn-time threshold in the candidate set certifies the anti-instantaneity condition")]
    CertificationFailed,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("value iteration hit the hard cap of {0} iterations before converging")]
    IterationBudgetExceeded(usize),

    #[error("dual continuation search did not stabilise within {0} evaluations")]
    SearchBudgetExceeded(usize),

    #[error("policy enumeration too large: {p1_policies:.3e} x {p2_policies:.3e} exceeds the limit of {limit:.3e} matrix entries")]
    EnumerationTooLarge {
        p1_policies: f64,
        p2_policies: f64,
        limit: f64,
    },

    #[error("policy table covers depth {available} but depth {requested} was requested")]
    DepthExceeded { requested: usize, available: usize },

    #[error("best-response tree of {nodes:.3e} leaves exceeds the budget of {budget:.3e}")]
    BudgetExceeded { nodes: f64, budget: f64 },

    #[error("engine protocol misuse: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
