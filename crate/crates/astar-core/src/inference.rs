//! Guided inference: replay retrieved card templates against the policy,
//! then pick the final answer by majority vote with optional outcome
//! scoring inside the winning cluster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::cards::ThoughtCard;
use crate::providers::{GenerationParams, PolicyModel, ProviderError, RewardProvider};
use crate::query::Query;
use crate::trajectory::{ReasoningStep, Trajectory};

/// What happened to one card's instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    /// The run committed to an answer.
    Answered,
    /// The run completed but never produced an answer.
    Answerless,
    /// A provider failure aborted the run.
    Failed,
}

/// One card's attempt at the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub card_id: String,
    pub steps: Vec<ReasoningStep>,
    /// Canonical answer from the final step, when one exists.
    pub answer: Option<String>,
    pub orm_score: Option<f64>,
    pub status: CandidateStatus,
    /// Provider error message for failed candidates.
    pub failure: Option<String>,
}

impl Candidate {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    /// Rebuilds the trajectory of an answered candidate.
    fn trajectory(&self, query_id: &str) -> Option<Trajectory> {
        if self.status != CandidateStatus::Answered {
            return None;
        }
        Trajectory::new(query_id, self.steps.clone(), 0.0).ok()
    }
}

/// Verified outcome for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedResult {
    pub final_trajectory: Trajectory,
    pub selected_card: String,
    /// Canonical final answer.
    pub answer: String,
    /// Winning-cluster size over the number of answered candidates.
    pub vote_confidence: f64,
    /// Full audit trail in retrieval order.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("no candidate produced an answer")]
    AllAnswerless,
    #[error("no candidates to verify")]
    NoCandidates,
    #[error("outcome scoring failed: {0}")]
    Orm(#[from] ProviderError),
}

/// Executes a card's actions in order, stopping at the first step that
/// commits to an answer. If no templated step answers, one extra
/// answer-demanding reasoning step is appended. Returns the steps and the
/// canonical answer, if any.
pub fn instantiate_card(
    query: &Query,
    card: &ThoughtCard,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
) -> Result<(Vec<ReasoningStep>, Option<String>), ProviderError> {
    let mut steps: Vec<ReasoningStep> = Vec::with_capacity(card.template.actions().len() + 1);
    for &action in card.template.actions() {
        let step = policy.generate_step(query, &steps, action, params)?;
        let answered = step.extracted_answer.is_some();
        steps.push(step);
        if answered {
            return Ok(answer_of(steps));
        }
    }
    let forced = policy.generate_step(query, &steps, Action::ChainOfThought, params)?;
    steps.push(forced);
    Ok(answer_of(steps))
}

fn answer_of(steps: Vec<ReasoningStep>) -> (Vec<ReasoningStep>, Option<String>) {
    let answer = steps
        .last()
        .and_then(|s| s.extracted_answer.clone());
    (steps, answer)
}

/// Runs one card end to end, folding provider failures into the candidate
/// record so other cards proceed.
pub fn run_candidate(
    query: &Query,
    card: &ThoughtCard,
    policy: &dyn PolicyModel,
    params: &GenerationParams,
) -> Candidate {
    match instantiate_card(query, card, policy, params) {
        Ok((steps, Some(answer))) => Candidate {
            card_id: card.card_id.clone(),
            steps,
            answer: Some(answer),
            orm_score: None,
            status: CandidateStatus::Answered,
            failure: None,
        },
        Ok((steps, None)) => Candidate {
            card_id: card.card_id.clone(),
            steps,
            answer: None,
            orm_score: None,
            status: CandidateStatus::Answerless,
            failure: None,
        },
        Err(err) => Candidate {
            card_id: card.card_id.clone(),
            steps: Vec::new(),
            answer: None,
            orm_score: None,
            status: CandidateStatus::Failed,
            failure: Some(err.to_string()),
        },
    }
}

/// Modal answer and its frequency among the inputs; ties between modes go
/// to the answer that appeared first. None only for an empty slice.
pub fn majority_vote(answers: &[String]) -> Option<(String, f64)> {
    if answers.is_empty() {
        return None;
    }
    let mut tallies: Vec<(&String, usize)> = Vec::new();
    for answer in answers {
        match tallies.iter_mut().find(|(a, _)| *a == answer) {
            Some((_, count)) => *count += 1,
            None => tallies.push((answer, 1)),
        }
    }
    let mut winner = tallies[0];
    for &tally in &tallies[1..] {
        if tally.1 > winner.1 {
            winner = tally;
        }
    }
    Some((winner.0.clone(), winner.1 as f64 / answers.len() as f64))
}

/// Votes over the answered candidates, then picks the winning cluster's
/// best member: highest outcome score when a reward provider is present
/// (ties to lower cost, then card_id), otherwise lowest cost (ties to
/// card_id). Scored candidates keep their scores in the audit trail.
pub fn verify_and_select(
    query: &Query,
    candidates: &[Candidate],
    orm: Option<&dyn RewardProvider>,
) -> Result<VerifiedResult, VerifyError> {
    if candidates.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    let mut audited = candidates.to_vec();
    let answered: Vec<usize> = audited
        .iter()
        .enumerate()
        .filter(|(_, c)| c.status == CandidateStatus::Answered && c.answer.is_some())
        .map(|(i, _)| i)
        .collect();
    let answers: Vec<String> = answered
        .iter()
        .map(|&i| audited[i].answer.clone().expect("answered implies answer"))
        .collect();
    let (winning_answer, vote_confidence) =
        majority_vote(&answers).ok_or(VerifyError::AllAnswerless)?;

    let cluster: Vec<usize> = answered
        .into_iter()
        .filter(|&i| audited[i].answer.as_deref() == Some(winning_answer.as_str()))
        .collect();
    debug_assert!(!cluster.is_empty());

    if let Some(orm) = orm {
        for &i in &cluster {
            let trajectory = audited[i]
                .trajectory(&query.id)
                .expect("cluster members are answered");
            let score = orm.score_outcome(query, &trajectory)?;
            audited[i].orm_score = Some(score);
        }
    }

    let &selected = cluster
        .iter()
        .reduce(|best, challenger| {
            let b = &audited[*best];
            let c = &audited[*challenger];
            let better = match (c.orm_score, b.orm_score) {
                (Some(cs), Some(bs)) if cs != bs => cs > bs,
                _ => {
                    c.cost() < b.cost() || (c.cost() == b.cost() && c.card_id < b.card_id)
                }
            };
            if better {
                challenger
            } else {
                best
            }
        })
        .expect("cluster is non-empty");

    let winner = &audited[selected];
    let final_trajectory = winner
        .trajectory(&query.id)
        .expect("selected candidate is answered");
    Ok(VerifiedResult {
        final_trajectory,
        selected_card: winner.card_id.clone(),
        answer: winning_answer,
        vote_confidence,
        candidates: audited,
    })
}

/// Per-candidate slice of the results record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub card_id: String,
    pub answer: Option<String>,
    pub cost: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orm_score: Option<f64>,
    pub status: CandidateStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&Candidate> for CandidateRecord {
    fn from(c: &Candidate) -> Self {
        CandidateRecord {
            card_id: c.card_id.clone(),
            answer: c.answer.clone(),
            cost: c.cost(),
            orm_score: c.orm_score,
            status: c.status,
            error: c.failure.clone(),
        }
    }
}

/// How a query's inference run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    Answered,
    Unanswered,
    Failed,
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query_id: String,
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vote_confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_card: Option<String>,
    pub status: ResultStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn from_verified(result: &VerifiedResult) -> Self {
        ResultRecord {
            query_id: result.final_trajectory.query_id.clone(),
            answer: Some(result.answer.clone()),
            vote_confidence: Some(result.vote_confidence),
            selected_card: Some(result.selected_card.clone()),
            status: ResultStatus::Answered,
            candidates: result.candidates.iter().map(CandidateRecord::from).collect(),
            error: None,
        }
    }

    pub fn unanswered(query_id: &str, candidates: &[Candidate]) -> Self {
        ResultRecord {
            query_id: query_id.to_string(),
            answer: None,
            vote_confidence: None,
            selected_card: None,
            status: ResultStatus::Unanswered,
            candidates: candidates.iter().map(CandidateRecord::from).collect(),
            error: None,
        }
    }

    pub fn failed(query_id: &str, message: String) -> Self {
        ResultRecord {
            query_id: query_id.to_string(),
            answer: None,
            vote_confidence: None,
            selected_card: None,
            status: ResultStatus::Failed,
            candidates: Vec::new(),
            error: Some(message),
        }
    }
}
