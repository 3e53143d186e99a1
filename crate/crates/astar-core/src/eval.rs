//! Accuracy evaluation: normalized exact match of result answers against
//! dataset gold answers, with a per-category breakdown.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::normalize_answer;
use crate::inference::ResultRecord;
use crate::query::Query;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub correct: usize,
    pub total: usize,
}

impl CategoryStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Accuracy report over one results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    /// Records with no answer (unanswered or failed); counted incorrect.
    pub unanswered: usize,
    pub accuracy: f64,
    /// Per-category stats for records whose query carries a label.
    pub categories: BTreeMap<String, CategoryStats>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no result records to evaluate")]
    Empty,
    #[error("result references unknown query id {id:?}")]
    UnknownId { id: String },
    #[error("query {id:?} has no gold answer")]
    MissingGold { id: String },
}

/// Scores results against the dataset. Every record's id must exist in
/// the dataset and carry a gold answer. Answerless records count as
/// incorrect.
pub fn evaluate(results: &[ResultRecord], dataset: &[Query]) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let by_id: HashMap<&str, &Query> = dataset.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut report = EvalReport {
        total: results.len(),
        correct: 0,
        unanswered: 0,
        accuracy: 0.0,
        categories: BTreeMap::new(),
    };
    for record in results {
        let query = by_id
            .get(record.query_id.as_str())
            .ok_or_else(|| EvalError::UnknownId {
                id: record.query_id.clone(),
            })?;
        let gold = query.gold_answer.as_ref().ok_or_else(|| EvalError::MissingGold {
            id: record.query_id.clone(),
        })?;
        let correct = match &record.answer {
            Some(answer) => normalize_answer(answer) == normalize_answer(gold),
            None => {
                report.unanswered += 1;
                false
            }
        };
        if correct {
            report.correct += 1;
        }
        if let Some(category) = &query.category {
            let stats = report.categories.entry(category.clone()).or_default();
            stats.total += 1;
            if correct {
                stats.correct += 1;
            }
        }
    }
    report.accuracy = report.correct as f64 / report.total as f64;
    Ok(report)
}

/// Plain-text accuracy table.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "overall: {}/{} correct ({:.4}), {} unanswered",
        report.correct, report.total, report.accuracy, report.unanswered
    );
    if !report.categories.is_empty() {
        let _ = writeln!(out, "{:<20} {:>8} {:>8} {:>10}", "category", "correct", "total", "accuracy");
        for (name, stats) in &report.categories {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>10.4}",
                name,
                stats.correct,
                stats.total,
                stats.accuracy()
            );
        }
    }
    out
}
