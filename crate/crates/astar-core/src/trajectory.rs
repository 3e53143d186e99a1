//! Reasoning steps and completed root-to-answer trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionTemplate};
use crate::answer::normalize_answer;

/// Literal line prefix that commits a step to a final answer. The
/// remainder of the marker line is the raw answer text.
pub const ANSWER_MARKER: &str = "FINAL ANSWER:";

/// One policy-generated reasoning move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub action: Action,
    /// Raw model output for this step. Never empty.
    pub content: String,
    /// Canonical answer committed by this step, if its content carries the
    /// answer marker. Never empty when present.
    pub extracted_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("reasoning step content must be non-empty")]
    EmptyContent,
}

impl ReasoningStep {
    /// Builds a step, extracting the canonical answer from the content.
    pub fn new(action: Action, content: impl Into<String>) -> Result<Self, StepError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(StepError::EmptyContent);
        }
        let extracted_answer = extract_final_answer(&content);
        Ok(ReasoningStep {
            action,
            content,
            extracted_answer,
        })
    }
}

/// Scans content for the answer marker and returns the canonical answer
/// from the last marker line, if any. The marker must begin its line; an
/// answer that normalizes to the empty string does not count.
pub fn extract_final_answer(content: &str) -> Option<String> {
    let mut found = None;
    for line in content.lines() {
        if let Some(rest) = line.strip_prefix(ANSWER_MARKER) {
            let normalized = normalize_answer(rest);
            if !normalized.is_empty() {
                found = Some(normalized);
            }
        }
    }
    found
}

/// A completed reasoning path ending in an answer-bearing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query_id: String,
    pub steps: Vec<ReasoningStep>,
    /// Canonical answer, always equal to the last step's extracted answer.
    pub answer: String,
    /// Terminal self-consistency reward in [0, 1].
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory must contain at least one step")]
    EmptySteps,
    #[error("trajectory must end in an answer-bearing step")]
    MissingAnswer,
    #[error("trajectory reward {0} is outside [0, 1]")]
    RewardOutOfRange(f64),
}

impl Trajectory {
    pub fn new(
        query_id: impl Into<String>,
        steps: Vec<ReasoningStep>,
        reward: f64,
    ) -> Result<Self, TrajectoryError> {
        let last = steps.last().ok_or(TrajectoryError::EmptySteps)?;
        let answer = last
            .extracted_answer
            .clone()
            .ok_or(TrajectoryError::MissingAnswer)?;
        if !(0.0..=1.0).contains(&reward) || reward.is_nan() {
            return Err(TrajectoryError::RewardOutOfRange(reward));
        }
        Ok(Trajectory {
            query_id: query_id.into(),
            steps,
            answer,
            reward,
        })
    }

    /// Ordered actions of this trajectory.
    pub fn template(&self) -> ActionTemplate {
        ActionTemplate::new(self.steps.iter().map(|s| s.action).collect())
            .expect("trajectory steps are non-empty")
    }

    /// Number of reasoning steps; the cost term in path scoring.
    pub fn cost(&self) -> usize {
        self.steps.len()
    }
}
