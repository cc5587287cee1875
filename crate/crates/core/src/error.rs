use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable `{variable}` has no state `{state}`")]
    UnknownState { variable: String, state: String },

    #[error("parameter {0} does not exist")]
    UnknownParameter(String),

    #[error("node `{node}`: expected {expected} parent states, got {found}")]
    BadConfiguration {
        node: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid network: {}", join_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("evidence has zero probability under the model")]
    ZeroProbabilityEvidence,

    #[error("target `{0}` is also an evidence variable")]
    TargetInEvidence(String),

    #[error("frozen parameter {0}: deterministic entries cannot be differentiated or edited")]
    FrozenParameter(String),

    #[error("assignment does not cover variable `{0}`")]
    IncompleteAssignment(String),

    #[error("state space of {size} configurations exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("parameter {param} would leave its domain (value {value})")]
    OutOfDomain { param: String, value: f64 },

    #[error("log score undefined: model gives zero probability to state `{0}` which the assessment supports")]
    SupportViolation(String),

    #[error("{method} sampling accepted no samples out of {count}")]
    NoAcceptedSamples { method: String, count: u64 },

    #[error("objective became non-finite in epoch {epoch} at assessment {assessment}")]
    Divergence { epoch: usize, assessment: usize },

    #[error("assessment {index}: {reason}")]
    InvalidAssessment { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// Short stable tag for machine consumers.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::UnknownVariable(_) => "unknown variable",
            Error::UnknownState { .. } => "unknown state",
            Error::UnknownParameter(_) => "unknown parameter",
            Error::BadConfiguration { .. } => "bad configuration",
            Error::InvalidNetwork(_) => "invalid network",
            Error::ZeroProbabilityEvidence => "zero-probability evidence",
            Error::TargetInEvidence(_) => "target in evidence",
            Error::FrozenParameter(_) => "frozen parameter",
            Error::IncompleteAssignment(_) => "incomplete assignment",
            Error::StateSpaceTooLarge { .. } => "state space too large",
            Error::OutOfDomain { .. } => "out of domain",
            Error::SupportViolation(_) => "support violation",
            Error::NoAcceptedSamples { .. } => "no accepted samples",
            Error::Divergence { .. } => "divergence",
            Error::InvalidAssessment { .. } => "invalid assessment",
            Error::InvalidConfig(_) => "invalid configuration",
            Error::Format(_) => "format",
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
