use std::fmt;

use thiserror::Error;

/// A single violated invariant, addressed by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigIssue {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", format_issues(.0))]
    Invalid(Vec<ConfigIssue>),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration has no receiver board")]
    NoReceiver,
    #[error("attack plan supplied but configuration has no sender board")]
    NoSender,
}
