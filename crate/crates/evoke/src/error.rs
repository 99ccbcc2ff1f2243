//! Top-level CLI error classification, mapped onto exit codes:
//! 2 validation, 3 provider, 4 corruption.

use evoke_core::error::{EmbedError, EngineError, KnowledgeError};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::persist::PersistError;
use crate::report::ReportError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Corruption(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Corruption(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Corrupt { .. }
            | PersistError::Invalid(_)
            | PersistError::RecordMismatch { .. } => CliError::Corruption(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Malformed { .. } => CliError::Corruption(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Provider { .. } | EmbedError::MissingConfiguration(_) => {
                CliError::Provider(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<evoke_core::error::ConfigError> for CliError {
    fn from(e: evoke_core::error::ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Embed(inner) => inner.into(),
            EngineError::Knowledge(KnowledgeError::Synthesizer(m)) => {
                CliError::Provider(format!("synthesizer failed: {m}"))
            }
            EngineError::Knowledge(KnowledgeError::Embed(inner)) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::validation("x").exit_code(), 2);
        let provider: CliError = EmbedError::MissingConfiguration("EVOKE_EMBED_URL".into()).into();
        assert_eq!(provider.exit_code(), 3);
        let corrupt: CliError = PersistError::Corrupt {
            path: PathBuf::from("manifest"),
            detail: "bad".into(),
        }
        .into();
        assert_eq!(corrupt.exit_code(), 4);
    }
}
