use thiserror::Error;

use crate::network::ValidationIssue;

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid network: {}", format_issues(.0))]
    InvalidNetwork(Vec<ValidationIssue>),

    #[error("network has no lines")]
    NoLines,

    #[error("network has no load buses")]
    NoLoads,

    #[error("bus {bus} has nonpositive voltage {voltage} V")]
    NonPositiveVoltage { bus: usize, voltage: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("controller {kind} does not provide {what}")]
    WrongControllerKind {
        kind: &'static str,
        what: &'static str,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("CPL collapse at t = {time} s: load bus {bus} voltage fell to {voltage} V")]
    CplCollapse { time: f64, bus: usize, voltage: f64 },

    #[error("step size underflow at t = {time} s (h = {step})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("trajectory has not settled: terminal derivative norm {norm}")]
    NotSettled { norm: f64 },

    #[error("no meaningful sharing metric: mean source power {0} W is not positive")]
    NoSharingReference(f64),

    #[error("scenario error at {field}: {reason}")]
    Scenario { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl GridError {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        GridError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn scenario(field: impl Into<String>, reason: impl Into<String>) -> Self {
        GridError::Scenario {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GridError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
