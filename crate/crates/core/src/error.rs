use std::fmt;

use crate::worldmodel::ModelIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status class for an error, shared by the CLI and the C API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage = 1,
    Validation = 2,
    Numeric = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid world model:\n{}", join_issues(.0))]
    InvalidModel(Vec<ModelIssue>),

    #[error("trajectory count exceeds the configured cap of {cap}")]
    ExplosionGuard { cap: usize },

    #[error("conditioning on zero-probability event `{0}`")]
    ZeroProbabilityEvent(String),

    /// The agent can receive an observation that is impossible under its
    /// assumption about the other agents, so its conditional goal is undefined.
    #[error(
        "assumption violated: agent `{agent}` can observe {observation}, which has zero probability under `{assumption}`"
    )]
    AssumptionViolated {
        agent: String,
        assumption: String,
        observation: String,
    },

    #[error("variable `{0}` is undefined on some trajectory")]
    UnevaluableVariable(String),

    #[error("marginals are over different variable specs ({left} vs {right})")]
    SpecMismatch { left: String, right: String },

    #[error("unknown divergence kind `{0}`")]
    UnknownKind(String),

    #[error("utility set is empty")]
    EmptyUtilitySet,

    #[error("utility `{name}` evaluates to {value} on a reachable trajectory; utilities must lie in [0, 1]")]
    UnboundedUtility { name: String, value: f64 },

    #[error("agent `{0}` is active in some branch but has no policy")]
    MissingPolicy(String),

    #[error("policy does not fit agent `{agent}`: {reason}")]
    PolicyMismatch { agent: String, reason: String },

    #[error("unknown {kind} `{name}`; valid names: {}", .valid.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: Vec<String>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("unknown built-in scenario `{name}`; built-ins: {}", .builtins.join(", "))]
    UnknownBuiltin { name: String, builtins: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownName { .. } | Error::UnknownKind(_) | Error::InvalidConfig(_) => {
                ErrorClass::Usage
            }
            Error::InvalidModel(_)
            | Error::Parse(_)
            | Error::Validation(_)
            | Error::UnknownBuiltin { .. }
            | Error::Io(_)
            | Error::MissingPolicy(_)
            | Error::PolicyMismatch { .. } => ErrorClass::Validation,
            Error::ExplosionGuard { .. }
            | Error::ZeroProbabilityEvent(_)
            | Error::AssumptionViolated { .. }
            | Error::UnevaluableVariable(_)
            | Error::SpecMismatch { .. }
            | Error::EmptyUtilitySet
            | Error::UnboundedUtility { .. } => ErrorClass::Numeric,
        }
    }

    /// True for both plain zero-probability conditioning and the
    /// assumption-violation diagnostic raised by conditional evaluation.
    pub fn is_zero_probability(&self) -> bool {
        matches!(
            self,
            Error::ZeroProbabilityEvent(_) | Error::AssumptionViolated { .. }
        )
    }
}

fn join_issues(issues: &[ModelIssue]) -> String {
    struct Lines<'a>(&'a [ModelIssue]);
    impl fmt::Display for Lines<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for (i, issue) in self.0.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "  - {issue}")?;
            }
            Ok(())
        }
    }
    Lines(issues).to_string()
}
