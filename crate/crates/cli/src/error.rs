use std::fmt;

use serde::Serialize;
use varsearch::analytics::AnalyticsError;
use varsearch::gateway::GatewayError;
use varsearch::search::SearchError;
use varsearch::store::StoreError;

/// Failure classes and their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Bad input data: templates, run store contents, analysis preconditions.
    Data,
    /// Bad invocation or configuration.
    Usage,
    /// The model backend failed.
    Gateway,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Data => 1,
            ErrorKind::Usage => 2,
            ErrorKind::Gateway => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn gateway(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Gateway, message)
    }

    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            template: None,
            message: message.into(),
        }
    }

    pub fn for_template(mut self, id: &str) -> Self {
        self.template.get_or_insert_with(|| id.to_string());
        self
    }

    /// One JSON line for stderr.
    pub fn record(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "error": self })).expect("error records serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.template {
            Some(t) => write!(f, "{t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match &e {
            SearchError::Gateway(_) => Self::gateway(e.to_string()),
            SearchError::InvalidParams(_) | SearchError::Resume(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        Self::gateway(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        Self::data(e.to_string())
    }
}
