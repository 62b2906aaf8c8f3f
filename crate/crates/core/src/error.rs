use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::ParseError;
use crate::model::{Id, StateIndex};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Engine errors. Each variant maps onto exactly one [`ErrorCode`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("name '{0}' is already in use")]
    DuplicateName(String),
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),
    #[error("unknown concept: {0}")]
    UnknownConcept(String),
    #[error("unknown domain: {0}")]
    UnknownDomain(String),
    #[error("unknown id {0}")]
    UnknownId(Id),
    #[error("object {id} is not alive at state {state}")]
    NotAliveAtState { id: Id, state: StateIndex },
    #[error("state {requested} is beyond head {head}")]
    StateBeyondHead { requested: StateIndex, head: StateIndex },
    #[error("no object satisfies the formula")]
    NoneSatisfies,
    #[error("{count} objects satisfy the formula")]
    Ambiguous { count: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("formula nesting exceeds depth {limit}")]
    DepthExceeded { limit: usize },
    #[error("unknown attribute '{attribute}' on {concept}")]
    UnknownAttribute { concept: String, attribute: String },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("stratification: formula level {formula_level} must be below target level {target_level}")]
    Stratification { formula_level: u32, target_level: u32 },
    #[error("level {level} exceeds tower cap {cap}")]
    TowerCapExceeded { level: u32, cap: u32 },
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("rule {rule} rejected the event: {message}")]
    RuleRejection { rule: Id, message: String },
    #[error("unknown event kind '{0}'")]
    UnknownKind(String),
    #[error("user has no active assignment")]
    NoAssignment,
    #[error("authentication failed")]
    AuthFailed,
    #[error("session is closed")]
    SessionClosed,
    #[error("invalid appraisal parameters: {0}")]
    InvalidParams(String),
    #[error("position {0} is not vacant")]
    NotVacant(Id),
    #[error("malformed pack {path}: {message}")]
    MalformedPack { path: String, message: String },
    #[error("merge plan has {0} conflict(s)")]
    ConflictsPresent(usize),
    #[error("store moved from state {planned} to {head} since analysis")]
    StaleStore { planned: StateIndex, head: StateIndex },
    #[error("required packs are not applied: {}", .0.join(", "))]
    PacksMissing(Vec<String>),
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Wire-level error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Parse,
    UnknownId,
    UnknownConcept,
    NoneSatisfies,
    Ambiguous,
    Stratification,
    AccessDenied,
    Validation,
    RuleRejection,
    Conflict,
    StaleStore,
    StateBeyondHead,
    AuthFailed,
    NoAssignment,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 14] = [
        ErrorCode::Parse,
        ErrorCode::UnknownId,
        ErrorCode::UnknownConcept,
        ErrorCode::NoneSatisfies,
        ErrorCode::Ambiguous,
        ErrorCode::Stratification,
        ErrorCode::AccessDenied,
        ErrorCode::Validation,
        ErrorCode::RuleRejection,
        ErrorCode::Conflict,
        ErrorCode::StaleStore,
        ErrorCode::StateBeyondHead,
        ErrorCode::AuthFailed,
        ErrorCode::NoAssignment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::Parse => "PARSE",
            ErrorCode::UnknownId => "UNKNOWN_ID",
            ErrorCode::UnknownConcept => "UNKNOWN_CONCEPT",
            ErrorCode::NoneSatisfies => "NONE_SATISFIES",
            ErrorCode::Ambiguous => "AMBIGUOUS",
            ErrorCode::Stratification => "STRATIFICATION",
            ErrorCode::AccessDenied => "ACCESS_DENIED",
            ErrorCode::Validation => "VALIDATION",
            ErrorCode::RuleRejection => "RULE_REJECTION",
            ErrorCode::Conflict => "CONFLICT",
            ErrorCode::StaleStore => "STALE_STORE",
            ErrorCode::StateBeyondHead => "STATE_BEYOND_HEAD",
            ErrorCode::AuthFailed => "AUTH_FAILED",
            ErrorCode::NoAssignment => "NO_ASSIGNMENT",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        use Error::*;
        match self {
            Parse(_) | DepthExceeded { .. } | MalformedPack { .. } => ErrorCode::Parse,
            UnknownId(_) | NotAliveAtState { .. } => ErrorCode::UnknownId,
            UnknownConcept(_) | UnknownDomain(_) => ErrorCode::UnknownConcept,
            NoneSatisfies => ErrorCode::NoneSatisfies,
            Ambiguous { .. } => ErrorCode::Ambiguous,
            Stratification { .. } | TowerCapExceeded { .. } => ErrorCode::Stratification,
            AccessDenied(_) => ErrorCode::AccessDenied,
            DuplicateName(_) | InvalidAttribute(_) | UnknownAttribute { .. } | TypeMismatch(_) | Validation(_)
            | UnknownKind(_) | InvalidParams(_) | NotVacant(_) | PacksMissing(_) | CorruptLog { .. } | Io(_) => {
                ErrorCode::Validation
            }
            RuleRejection { .. } => ErrorCode::RuleRejection,
            ConflictsPresent(_) => ErrorCode::Conflict,
            StaleStore { .. } => ErrorCode::StaleStore,
            StateBeyondHead { .. } => ErrorCode::StateBeyondHead,
            AuthFailed | SessionClosed => ErrorCode::AuthFailed,
            NoAssignment => ErrorCode::NoAssignment,
        }
    }

    /// Structured details for wire responses.
    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Error::Ambiguous { count } => json!({ "count": count }),
            Error::Parse(p) => json!({ "position": p.position, "expected": p.expected, "found": p.found }),
            Error::Validation(items) => json!({ "fields": items }),
            Error::RuleRejection { rule, message } => json!({ "rule": rule, "message": message }),
            Error::StateBeyondHead { requested, head } => json!({ "requested": requested, "head": head }),
            Error::Stratification { formula_level, target_level } => {
                json!({ "formula_level": formula_level, "target_level": target_level })
            }
            Error::TowerCapExceeded { level, cap } => json!({ "level": level, "cap": cap }),
            Error::StaleStore { planned, head } => json!({ "planned": planned, "head": head }),
            Error::ConflictsPresent(n) => json!({ "conflicts": n }),
            Error::UnknownId(id) | Error::NotVacant(id) => json!({ "id": id }),
            Error::NotAliveAtState { id, state } => json!({ "id": id, "state": state }),
            Error::CorruptLog { seq, reason } => json!({ "seq": seq, "reason": reason }),
            _ => json!({}),
        }
    }
}
