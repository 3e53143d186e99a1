//! Training-free reasoning orchestration around a frozen policy model.
//!
//! The pipeline has two phases. A build phase runs seeded Monte Carlo tree
//! search over a small corpus of seed questions and distills the best
//! root-to-answer paths into reusable action templates ("thought cards").
//! An inference phase embeds an incoming question, retrieves the closest
//! cards by rank fusion over textual similarity and estimated complexity,
//! replays each retrieved template through the policy, and selects a final
//! answer by self-consistency majority vote with an optional outcome
//! reward model as tie-breaker within the winning cluster.
//!
//! Providers (policy, embeddings, complexity, outcome reward) are trait
//! objects with deterministic mock implementations for offline runs and an
//! OpenAI-compatible HTTP implementation for live models.

pub mod action;
pub mod answer;
pub mod cards;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod inference;
pub mod matching;
pub mod mcts;
pub mod pipeline;
pub mod providers;
pub mod query;
pub mod seeding;
pub mod toy;
pub mod trajectory;

pub use action::{Action, ActionTemplate};
pub use answer::normalize_answer;
pub use query::{ImagePayload, Query};
pub use trajectory::{ReasoningStep, Trajectory, ANSWER_MARKER};
