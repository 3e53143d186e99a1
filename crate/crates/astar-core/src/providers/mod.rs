//! Pluggable model providers: policy, embeddings, complexity, and outcome
//! reward. Deterministic mocks live in [`mock`]; an OpenAI-compatible HTTP
//! client lives in [`http`].

pub mod http;
pub mod mock;
pub mod prompts;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::query::{ImageError, ImagePayload, Query};
use crate::trajectory::{ReasoningStep, Trajectory};

/// Tolerance for the unit-norm invariant on embeddings.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("model returned empty output")]
    EmptyOutput,
    #[error("unscripted request: {key}")]
    Unscripted { key: String },
    #[error("unparseable model output: {message}")]
    Parse { message: String },
    #[error("degenerate zero-norm embedding")]
    DegenerateEmbedding,
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("api key environment variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("invalid provider config: {message}")]
    InvalidConfig { message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Decoding controls passed through to the policy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidConfig {
                message: format!("temperature {} must be finite and >= 0", self.temperature),
            });
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidConfig {
                message: "max_tokens must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Connection settings for one HTTP-backed provider role.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token. The
    /// token value itself is never logged or echoed.
    pub api_key_env: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Vec<Duration>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint_url: String::new(),
            api_key_env: "ASTAR_API_KEY".into(),
            model_name: String::new(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff: vec![
                Duration::from_millis(250),
                Duration::from_millis(500),
                Duration::from_millis(1000),
            ],
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(ProviderError::InvalidConfig {
                message: "endpoint_url must be non-empty".into(),
            });
        }
        if self.model_name.trim().is_empty() {
            return Err(ProviderError::InvalidConfig {
                message: "model_name must be non-empty".into(),
            });
        }
        if self.api_key_env.trim().is_empty() {
            return Err(ProviderError::InvalidConfig {
                message: "api_key_env must be non-empty".into(),
            });
        }
        if self.timeout.is_zero() {
            return Err(ProviderError::InvalidConfig {
                message: "timeout must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes raw values to unit norm. Zero or non-finite input is a
    /// degenerate-embedding failure.
    pub fn unit_from(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::DegenerateEmbedding);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ProviderError::DegenerateEmbedding);
        }
        Ok(Embedding {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Accepts stored values verbatim, checking the unit-norm invariant
    /// without renormalizing so persisted vectors round-trip exactly.
    pub fn from_stored(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::DegenerateEmbedding);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(ProviderError::DegenerateEmbedding);
        }
        Ok(Embedding { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Arithmetic mean of the given embeddings, renormalized to unit norm.
    /// An exactly cancelling mean is a degenerate-embedding failure; a
    /// dimension disagreement is a dimension-mismatch failure.
    pub fn normalized_mean<'a, I>(embeddings: I) -> Result<Embedding, ProviderError>
    where
        I: IntoIterator<Item = &'a Embedding>,
    {
        let mut iter = embeddings.into_iter();
        let first = iter.next().ok_or(ProviderError::DegenerateEmbedding)?;
        let mut sum = first.values.clone();
        let mut count = 1usize;
        for e in iter {
            if e.dim() != sum.len() {
                return Err(ProviderError::DimensionMismatch {
                    expected: sum.len(),
                    actual: e.dim(),
                });
            }
            for (acc, v) in sum.iter_mut().zip(&e.values) {
                *acc += v;
            }
            count += 1;
        }
        for v in sum.iter_mut() {
            *v /= count as f64;
        }
        Embedding::unit_from(sum)
    }
}

/// Step-generating policy model.
pub trait PolicyModel: Send + Sync {
    /// Produces the next reasoning step for the requested action given the
    /// steps so far. The returned step's action equals the requested one.
    fn generate_step(
        &self,
        query: &Query,
        history: &[ReasoningStep],
        action: Action,
        params: &GenerationParams,
    ) -> Result<ReasoningStep, ProviderError>;

    /// Samples one direct answer for the query (no intermediate steps),
    /// used by the self-consistency vote. Returns None when the sample
    /// fails to commit to an answer.
    fn direct_answer(
        &self,
        query: &Query,
        sample_index: u32,
        params: &GenerationParams,
    ) -> Result<Option<String>, ProviderError>;
}

/// Text and image embedding model.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError>;
    fn embed_image(&self, image: &ImagePayload) -> Result<Embedding, ProviderError>;
}

/// Estimates how many known conditions a query states. Non-negative.
pub trait ComplexityProvider: Send + Sync {
    fn estimate_complexity(&self, query: &Query) -> Result<f64, ProviderError>;
}

/// Outcome reward model scoring a finished trajectory in [0, 1].
pub trait RewardProvider: Send + Sync {
    fn score_outcome(&self, query: &Query, trajectory: &Trajectory) -> Result<f64, ProviderError>;
}

/// Joint query embedding: the renormalized mean of image and text
/// embeddings when an image is present, otherwise the text embedding.
pub fn joint_embedding(
    embedder: &dyn EmbeddingProvider,
    image: Option<&ImagePayload>,
    text: &str,
) -> Result<Embedding, ProviderError> {
    let text_embedding = embedder.embed_text(text)?;
    match image {
        Some(payload) => {
            let image_embedding = embedder.embed_image(payload)?;
            Embedding::normalized_mean([&image_embedding, &text_embedding])
        }
        None => Ok(text_embedding),
    }
}
