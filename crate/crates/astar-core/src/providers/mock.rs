//! Deterministic offline providers. Every output is a pure function of the
//! inputs, so identical runs reproduce bit-for-bit.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::action::Action;
use crate::answer::normalize_answer;
use crate::providers::{
    ComplexityProvider, Embedding, EmbeddingProvider, GenerationParams, PolicyModel,
    ProviderError, RewardProvider,
};
use crate::query::{ImagePayload, Query};
use crate::seeding::stable_hash64;
use crate::trajectory::{ReasoningStep, Trajectory};

/// Dimension of mock embeddings.
pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Embeds content as a content-hash-seeded pseudo-random unit vector.
/// Identical content always embeds identically.
#[derive(Debug, Clone, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    fn embed_bytes(&self, tag: &[u8], content: &[u8]) -> Result<Embedding, ProviderError> {
        let seed = stable_hash64(&[tag, content]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..MOCK_EMBEDDING_DIM)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Embedding::unit_from(values)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.embed_bytes(b"text", text.as_bytes())
    }

    fn embed_image(&self, image: &ImagePayload) -> Result<Embedding, ProviderError> {
        let bytes = image.load_bytes()?;
        self.embed_bytes(b"image", &bytes)
    }
}

/// Counts the query's stated conditions.
#[derive(Debug, Clone, Default)]
pub struct MockComplexity;

impl ComplexityProvider for MockComplexity {
    fn estimate_complexity(&self, query: &Query) -> Result<f64, ProviderError> {
        Ok(query.conditions.len() as f64)
    }
}

/// Scores a trajectory 1.0 on a gold-answer match, 0.0 on a mismatch, and
/// 0.5 when the query carries no gold answer.
#[derive(Debug, Clone, Default)]
pub struct MockOutcomeReward;

impl RewardProvider for MockOutcomeReward {
    fn score_outcome(&self, query: &Query, trajectory: &Trajectory) -> Result<f64, ProviderError> {
        match &query.gold_answer {
            Some(gold) => {
                if normalize_answer(gold) == trajectory.answer {
                    Ok(1.0)
                } else {
                    Ok(0.0)
                }
            }
            None => Ok(0.5),
        }
    }
}

/// Policy driven by an explicit lookup table.
///
/// Step entries are keyed `"<query_id>|<path>"` where `<path>` is the
/// canonical template string of the history actions followed by the
/// requested action (e.g. `"toy-7|a1→a2"` for a second step `a2` after an
/// `a1`). Direct-answer vote samples are keyed `"<query_id>|vote:<k>"`.
/// Keys are matched bit-exactly; any unscripted request fails.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    entries: HashMap<String, String>,
}

impl ScriptedPolicy {
    pub fn new(entries: HashMap<String, String>) -> Self {
        ScriptedPolicy { entries }
    }

    /// Loads a script file: a single JSON object mapping keys to contents.
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ProviderError::InvalidConfig {
            message: format!("failed to read mock script {}: {e}", path.display()),
        })?;
        let entries: HashMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| ProviderError::InvalidConfig {
                message: format!("mock script {} is not a JSON string map: {e}", path.display()),
            })?;
        Ok(ScriptedPolicy { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, content: impl Into<String>) {
        self.entries.insert(key.into(), content.into());
    }

    fn step_key(query_id: &str, history: &[ReasoningStep], action: Action) -> String {
        let mut key = String::from(query_id);
        key.push('|');
        for step in history {
            key.push_str(step.action.short_name());
            key.push('\u{2192}');
        }
        key.push_str(action.short_name());
        key
    }
}

impl PolicyModel for ScriptedPolicy {
    fn generate_step(
        &self,
        query: &Query,
        history: &[ReasoningStep],
        action: Action,
        _params: &GenerationParams,
    ) -> Result<ReasoningStep, ProviderError> {
        let key = Self::step_key(&query.id, history, action);
        let content = self
            .entries
            .get(&key)
            .ok_or_else(|| ProviderError::Unscripted { key: key.clone() })?;
        ReasoningStep::new(action, content.clone()).map_err(|_| ProviderError::EmptyOutput)
    }

    fn direct_answer(
        &self,
        query: &Query,
        sample_index: u32,
        _params: &GenerationParams,
    ) -> Result<Option<String>, ProviderError> {
        let key = format!("{}|vote:{sample_index}", query.id);
        let answer = self
            .entries
            .get(&key)
            .ok_or(ProviderError::Unscripted { key })?;
        Ok(Some(answer.clone()))
    }
}
