//! Runner errors and their exit codes.
//!
//! | exit | meaning                                              |
//! |------|------------------------------------------------------|
//! | 1    | a verification ran and its hypothesis was rejected, or I/O failed |
//! | 2    | the configuration does not match the schema          |
//! | 3    | a precondition of the requested operation is violated |
//! | 4    | a numerical procedure failed                         |
//!
//! Every error is also reported as one JSON object on standard error.

use rankflow::model::ModelError;
use rankflow::rates::RatesError;
use rankflow::simulate::SimError;
use rankflow::stats::StatsError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Schema { pointer: String, message: String },
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Precondition(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::VerificationFailed(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema { .. } => "schema_violation",
            CliError::Precondition(_) => "precondition_violation",
            CliError::Numerical(_) => "numerical_failure",
            CliError::VerificationFailed(_) => "verification_failed",
            CliError::Io(_) => "io_error",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pointer = match self {
            CliError::Schema { pointer, .. } => Some(pointer.clone()),
            _ => None,
        };
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
            "pointer": pointer,
        })
    }

    pub fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

impl From<RatesError> for CliError {
    fn from(e: RatesError) -> Self {
        match e {
            RatesError::MonotonicityViolated { .. } | RatesError::InconsistentLimits => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::SkorokhodNonconvergence { .. } | SimError::ExhaustedTailBudget { .. } => {
                CliError::Numerical(e.to_string())
            }
            SimError::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::schema("/sim/dt", "missing").exit_code(), 2);
        assert_eq!(CliError::from(StatsError::EmptySample).exit_code(), 3);
        let e = SimError::ExhaustedTailBudget { replica: 0, limit: 1 };
        assert_eq!(CliError::from(e).exit_code(), 4);
        assert_eq!(CliError::from(RatesError::InconsistentLimits).exit_code(), 4);
        assert_eq!(CliError::from(RatesError::NoIndices).exit_code(), 3);
    }

    #[test]
    fn json_carries_pointer_only_for_schema_errors() {
        let v = CliError::schema("/sim/dt", "missing field `dt`").to_json();
        assert_eq!(v["pointer"], "/sim/dt");
        assert_eq!(v["exit_code"], 2);
        assert!(CliError::Numerical("x".into()).to_json()["pointer"].is_null());
    }
}
