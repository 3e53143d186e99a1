//! JSON Lines datasets: one task record per line, with images referenced
//! by a path relative to the dataset file or embedded as base64.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{ImagePayload, Query};

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("dataset line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("dataset {path} contains no records")]
    Empty { path: String },
}

impl DatasetRecord {
    /// Converts the record to a query, resolving a relative image path
    /// against `base_dir`.
    pub fn into_query(self, base_dir: &Path) -> Result<Query, String> {
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".to_string());
        }
        if self.question.trim().is_empty() {
            return Err("question must be non-empty".to_string());
        }
        let image = match (self.image_path, self.image_base64) {
            (Some(_), Some(_)) => {
                return Err("record sets both image_path and image_base64".to_string())
            }
            (Some(path), None) => {
                let resolved = if Path::new(&path).is_absolute() {
                    PathBuf::from(path)
                } else {
                    base_dir.join(path)
                };
                Some(ImagePayload::Path(resolved))
            }
            (None, Some(data)) => Some(ImagePayload::Base64(data)),
            (None, None) => None,
        };
        Ok(Query {
            id: self.id,
            text: self.question,
            image,
            gold_answer: self.answer,
            category: self.category,
            conditions: self.conditions,
        })
    }
}

/// Loads a dataset file into queries, in file order. Blank lines are
/// skipped; ids must be unique; image paths resolve against the dataset's
/// directory.
pub fn load_dataset(path: &Path) -> Result<Vec<Query>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in raw.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|source| DatasetError::Parse {
                line: line_no,
                source,
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        let query = record.into_query(&base_dir).map_err(|msg| DatasetError::Invalid {
            line: line_no,
            msg,
        })?;
        queries.push(query);
    }
    if queries.is_empty() {
        return Err(DatasetError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(queries)
}

/// Writes records as JSON Lines, one record per line.
pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    let mut body = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|source| DatasetError::Parse {
            line: 0,
            source,
        })?;
        body.push_str(&line);
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
