//! Queries the pipeline reasons about.

use std::fmt;
use std::path::PathBuf;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Image input attached to a query, either on disk or inline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImagePayload {
    /// Path to an image file, already resolved against the dataset root.
    Path(PathBuf),
    /// Base64-encoded image bytes.
    Base64(String),
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to read image file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid base64 image payload: {0}")]
    Base64(#[from] base64::DecodeError),
}

impl ImagePayload {
    /// Loads the raw image bytes, reading or decoding as needed.
    pub fn load_bytes(&self) -> Result<Vec<u8>, ImageError> {
        match self {
            ImagePayload::Path(path) => std::fs::read(path).map_err(|source| ImageError::Io {
                path: path.clone(),
                source,
            }),
            ImagePayload::Base64(data) => {
                Ok(base64::engine::general_purpose::STANDARD.decode(data.trim())?)
            }
        }
    }
}

/// A question to solve, with optional image, gold answer, and the list of
/// stated conditions used by complexity estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub image: Option<ImagePayload>,
    pub gold_answer: Option<String>,
    pub category: Option<String>,
    #[serde(default)]
    pub conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query id must be non-empty")]
    EmptyId,
    #[error("query {id}: text must be non-empty")]
    EmptyText { id: String },
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, QueryError> {
        let query = Query {
            id: id.into(),
            text: text.into(),
            image: None,
            gold_answer: None,
            category: None,
            conditions: Vec::new(),
        };
        query.validate()?;
        Ok(query)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.id.trim().is_empty() {
            return Err(QueryError::EmptyId);
        }
        if self.text.trim().is_empty() {
            return Err(QueryError::EmptyText {
                id: self.id.clone(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_blank_fields() {
        assert_eq!(Query::new("", "text"), Err(QueryError::EmptyId));
        assert!(matches!(
            Query::new("q1", "  "),
            Err(QueryError::EmptyText { .. })
        ));
        assert!(Query::new("q1", "what is 2+2?").is_ok());
    }

    #[test]
    fn base64_payload_round_trips() {
        let bytes = b"\x89PNG fake";
        let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
        let payload = ImagePayload::Base64(encoded);
        assert_eq!(payload.load_bytes().unwrap(), bytes);
    }

    #[test]
    fn invalid_base64_errors() {
        let payload = ImagePayload::Base64("!!!not base64!!!".into());
        assert!(matches!(payload.load_bytes(), Err(ImageError::Base64(_))));
    }

    #[test]
    fn missing_file_errors_with_path() {
        let payload = ImagePayload::Path(PathBuf::from("/nonexistent/image.png"));
        match payload.load_bytes() {
            Err(ImageError::Io { path, .. }) => {
                assert_eq!(path, PathBuf::from("/nonexistent/image.png"));
            }
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
