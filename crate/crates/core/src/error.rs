use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The document is not well-formed JSON or does not have the expected shape.
    #[error("malformed document at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{location}: unknown attribute `{attribute}`")]
    UnknownAttribute { location: String, attribute: String },

    #[error("{location}: value outside domain: `{value}` is not a value of `{attribute}`")]
    ValueOutsideDomain {
        location: String,
        attribute: String,
        value: String,
    },

    #[error("{location}: duplicate rule id {id}")]
    DuplicateRuleId { location: String, id: u64 },

    #[error("{location}: unknown operation `{operation}`")]
    UnknownOperation { location: String, operation: String },

    /// Any other structural constraint that a document violates.
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },

    #[error("unsupported predicate in tree construction: rule {rule_id} uses `{relation}` on `{attribute}`")]
    UnsupportedPredicate {
        rule_id: u64,
        attribute: String,
        relation: String,
    },

    #[error("entropy is undefined when all class counts are zero")]
    EmptyClassCounts,

    #[error("information gain is undefined for an empty rule set")]
    EmptyRuleSet,

    #[error("no candidate attributes to split on")]
    NoCandidates,

    #[error("cost {cost} lies outside the bounds [{min}, {max}]")]
    CostOutOfBounds { cost: f64, min: f64, max: f64 },

    #[error("degenerate cost bounds: min {min} must be below max {max}")]
    DegenerateBounds { min: f64, max: f64 },

    #[error("attributes of category `{0}` have no default change cost")]
    NoDefaultCost(String),

    #[error("request is not denied")]
    RequestNotDenied,

    #[error("brute-force enumeration of {states} states exceeds the guard of {guard}")]
    EnumerationGuard { states: u128, guard: u128 },

    #[error("could not reach the requested allow ratio {target}: {reason}")]
    TargetUnreachable { target: f64, reason: String },

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Malformed {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
