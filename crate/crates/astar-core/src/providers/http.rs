//! OpenAI-compatible HTTP providers for chat completions and embeddings.
//!
//! One [`HttpProvider`] instance implements all four provider roles against
//! a `{endpoint}/chat/completions` + `{endpoint}/embeddings` API. The
//! bearer token is read from the environment variable named in the config
//! and is never logged or echoed.

use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::action::Action;
use crate::answer::normalize_answer;
use crate::providers::prompts;
use crate::providers::{
    ComplexityProvider, Embedding, EmbeddingProvider, GenerationParams, PolicyModel,
    ProviderConfig, ProviderError, RewardProvider,
};
use crate::query::{ImagePayload, Query};
use crate::trajectory::{extract_final_answer, ReasoningStep, Trajectory};

/// Raw HTTP POST layer, swappable for tests.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &Value,
    ) -> Result<HttpResponse, String>;
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Blocking reqwest-backed transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::InvalidConfig {
                message: format!("failed to build http client: {e}"),
            })?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &Value,
    ) -> Result<HttpResponse, String> {
        let response = self
            .client
            .post(url)
            .bearer_auth(bearer_token)
            .json(body)
            .send()
            .map_err(|e| format!("request to {url} failed: {e}"))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| format!("failed to read response from {url}: {e}"))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f64>,
}

/// All four provider roles over one OpenAI-compatible endpoint.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    transport: Box<dyn HttpTransport>,
    embedding_dim: OnceLock<usize>,
}

impl HttpProvider {
    /// Builds a provider, resolving the bearer token from the environment
    /// variable named in the config.
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let api_key =
            std::env::var(&config.api_key_env).map_err(|_| ProviderError::MissingApiKey {
                var: config.api_key_env.clone(),
            })?;
        let transport = Box::new(ReqwestTransport::new(config.timeout)?);
        Ok(HttpProvider {
            config,
            api_key,
            transport,
            embedding_dim: OnceLock::new(),
        })
    }

    /// Test-oriented constructor with an explicit token and transport.
    pub fn with_transport(
        config: ProviderConfig,
        api_key: impl Into<String>,
        transport: Box<dyn HttpTransport>,
    ) -> Result<Self, ProviderError> {
        config.validate()?;
        Ok(HttpProvider {
            config,
            api_key: api_key.into(),
            transport,
            embedding_dim: OnceLock::new(),
        })
    }

    fn url(&self, suffix: &str) -> String {
        format!("{}/{suffix}", self.config.endpoint_url.trim_end_matches('/'))
    }

    /// Sends with retries on transport failures, 429, and 5xx. Never makes
    /// more than `max_retries + 1` attempts; the attempt count rides on the
    /// resulting error.
    fn send_with_retries(&self, url: &str, body: &Value) -> Result<String, ProviderError> {
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let outcome = self.transport.post_json(url, &self.api_key, body);
            let retryable = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    format!("status {}: {}", resp.status, truncate(&resp.body))
                }
                Ok(resp) => {
                    return Err(ProviderError::Api {
                        status: resp.status,
                        message: truncate(&resp.body),
                    })
                }
                Err(message) => message,
            };
            if attempts > self.config.max_retries {
                return Err(ProviderError::Transport {
                    attempts,
                    message: retryable,
                });
            }
            if let Some(delay) = self.config.backoff.get((attempts - 1) as usize) {
                std::thread::sleep(*delay);
            }
        }
    }

    fn chat(&self, messages: Value, params: &GenerationParams, seed: Option<u64>) -> Result<String, ProviderError> {
        params.validate()?;
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        let raw = self.send_with_retries(&self.url("chat/completions"), &body)?;
        let parsed: ChatResponse = serde_json::from_str(&raw).map_err(|e| ProviderError::Parse {
            message: format!("bad chat completion response: {e}"),
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(ProviderError::EmptyOutput);
        }
        Ok(content)
    }

    fn embed_input(&self, input: &str) -> Result<Embedding, ProviderError> {
        let body = json!({
            "model": self.config.model_name,
            "input": [input],
        });
        let raw = self.send_with_retries(&self.url("embeddings"), &body)?;
        let parsed: EmbeddingsResponse =
            serde_json::from_str(&raw).map_err(|e| ProviderError::Parse {
                message: format!("bad embeddings response: {e}"),
            })?;
        let row = parsed.data.into_iter().next().ok_or(ProviderError::Parse {
            message: "embeddings response carried no data rows".into(),
        })?;
        let embedding = Embedding::unit_from(row.embedding)?;
        let pinned = *self.embedding_dim.get_or_init(|| embedding.dim());
        if pinned != embedding.dim() {
            return Err(ProviderError::DimensionMismatch {
                expected: pinned,
                actual: embedding.dim(),
            });
        }
        Ok(embedding)
    }

    fn user_message(&self, query: &Query, text: String) -> Result<Value, ProviderError> {
        let mut blocks = vec![json!({"type": "text", "text": text})];
        if let Some(image) = &query.image {
            blocks.push(json!({
                "type": "image_url",
                "image_url": {"url": image_data_url(image)?},
            }));
        }
        Ok(json!({"role": "user", "content": blocks}))
    }

    fn parse_numeric_reply(content: &str) -> Result<f64, ProviderError> {
        normalize_answer(content)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ProviderError::Parse {
                message: format!("expected a number, got {:?}", truncate(content)),
            })
    }
}

/// Renders the question, conditions, and transcript-so-far ahead of the
/// instruction for the next move.
fn render_task(query: &Query, history: &[ReasoningStep], instruction: &str) -> String {
    let mut out = format!("Question: {}\n", query.text);
    if !query.conditions.is_empty() {
        out.push_str("Known conditions:\n");
        for condition in &query.conditions {
            out.push_str("- ");
            out.push_str(condition);
            out.push('\n');
        }
    }
    if !history.is_empty() {
        out.push_str("\nWork so far:\n");
        for (i, step) in history.iter().enumerate() {
            out.push_str(&format!("[{} {}] {}\n", i + 1, step.action.long_name(), step.content));
        }
    }
    out.push_str("\nNext move: ");
    out.push_str(instruction);
    out
}

/// Encodes image bytes as a base64 data URL with a sniffed media type.
pub fn image_data_url(image: &ImagePayload) -> Result<String, ProviderError> {
    let bytes = image.load_bytes()?;
    let media_type = sniff_media_type(&bytes);
    let encoded = base64::engine::general_purpose::STANDARD.encode(&bytes);
    Ok(format!("data:{media_type};base64,{encoded}"))
}

fn sniff_media_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(b"\xFF\xD8\xFF") {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/png"
    }
}

fn truncate(s: &str) -> String {
    const LIMIT: usize = 300;
    if s.len() <= LIMIT {
        s.to_string()
    } else {
        let mut end = LIMIT;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

impl PolicyModel for HttpProvider {
    fn generate_step(
        &self,
        query: &Query,
        history: &[ReasoningStep],
        action: Action,
        params: &GenerationParams,
    ) -> Result<ReasoningStep, ProviderError> {
        let task = render_task(query, history, prompts::action_prompt(action));
        let messages = json!([
            {"role": "system", "content": prompts::SYSTEM_PROMPT},
            self.user_message(query, task)?,
        ]);
        let content = self.chat(messages, params, params.seed)?;
        ReasoningStep::new(action, content).map_err(|_| ProviderError::EmptyOutput)
    }

    fn direct_answer(
        &self,
        query: &Query,
        sample_index: u32,
        params: &GenerationParams,
    ) -> Result<Option<String>, ProviderError> {
        let task = render_task(query, &[], &prompts::direct_answer_prompt());
        let messages = json!([
            {"role": "system", "content": prompts::SYSTEM_PROMPT},
            self.user_message(query, task)?,
        ]);
        let seed = params.seed.map(|s| s.wrapping_add(sample_index as u64));
        let content = self.chat(messages, params, seed)?;
        Ok(extract_final_answer(&content))
    }
}

impl EmbeddingProvider for HttpProvider {
    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.embed_input(text)
    }

    fn embed_image(&self, image: &ImagePayload) -> Result<Embedding, ProviderError> {
        self.embed_input(&image_data_url(image)?)
    }
}

impl ComplexityProvider for HttpProvider {
    fn estimate_complexity(&self, query: &Query) -> Result<f64, ProviderError> {
        let messages = json!([
            {"role": "system", "content": prompts::SYSTEM_PROMPT},
            self.user_message(query, prompts::complexity_prompt(&query.text))?,
        ]);
        let content = self.chat(messages, &GenerationParams::default(), None)?;
        let count = Self::parse_numeric_reply(&content)?;
        if count < 0.0 {
            return Err(ProviderError::Parse {
                message: format!("complexity {count} must be non-negative"),
            });
        }
        Ok(count)
    }
}

impl RewardProvider for HttpProvider {
    fn score_outcome(&self, query: &Query, trajectory: &Trajectory) -> Result<f64, ProviderError> {
        let transcript = trajectory
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("[{} {}] {}", i + 1, s.action.long_name(), s.content))
            .collect::<Vec<_>>()
            .join("\n");
        let messages = json!([
            {"role": "system", "content": prompts::SYSTEM_PROMPT},
            self.user_message(
                query,
                prompts::outcome_prompt(&query.text, &transcript, &trajectory.answer),
            )?,
        ]);
        let content = self.chat(messages, &GenerationParams::default(), None)?;
        let score = Self::parse_numeric_reply(&content)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ProviderError::Parse {
                message: format!("outcome score {score} is outside [0, 1]"),
            });
        }
        Ok(score)
    }
}
