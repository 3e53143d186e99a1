//! Run configuration: a TOML file selecting providers, search and scoring
//! parameters, and the run seed, plus the factory that turns it into live
//! provider handles.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::VocConfig;
use crate::mcts::MctsConfig;
use crate::providers::http::HttpProvider;
use crate::providers::mock::{MockComplexity, MockEmbedder, MockOutcomeReward, ScriptedPolicy};
use crate::providers::{
    ComplexityProvider, EmbeddingProvider, GenerationParams, PolicyModel, ProviderConfig,
    ProviderError, RewardProvider,
};
use crate::toy::ToyPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    None,
    Mock,
    Http,
}

/// Provider role selection plus per-backend settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub policy: ProviderKind,
    pub embedding: ProviderKind,
    pub complexity: ProviderKind,
    pub reward: RewardKind,
    pub mock: MockSettings,
    pub http: Option<HttpSettings>,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        ProvidersConfig {
            policy: ProviderKind::Mock,
            embedding: ProviderKind::Mock,
            complexity: ProviderKind::Mock,
            reward: RewardKind::None,
            mock: MockSettings::default(),
            http: None,
        }
    }
}

/// Mock backend settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    /// Policy script path; required when the policy provider is mock.
    pub script: Option<PathBuf>,
}

/// HTTP backend settings in plain-unit form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub endpoint_url: String,
    pub api_key_env: String,
    pub model_name: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: Vec<u64>,
}

impl Default for HttpSettings {
    fn default() -> Self {
        let base = ProviderConfig::default();
        HttpSettings {
            endpoint_url: base.endpoint_url,
            api_key_env: base.api_key_env,
            model_name: base.model_name,
            timeout_secs: base.timeout.as_secs(),
            max_retries: base.max_retries,
            backoff_ms: base.backoff.iter().map(|d| d.as_millis() as u64).collect(),
        }
    }
}

impl HttpSettings {
    pub fn to_provider_config(&self) -> ProviderConfig {
        ProviderConfig {
            endpoint_url: self.endpoint_url.clone(),
            api_key_env: self.api_key_env.clone(),
            model_name: self.model_name.clone(),
            timeout: Duration::from_secs(self.timeout_secs),
            max_retries: self.max_retries,
            backoff: self.backoff_ms.iter().map(|&ms| Duration::from_millis(ms)).collect(),
        }
    }
}

/// Everything a run needs beyond its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run_seed: u64,
    /// Cap on how many seed records build-cards processes.
    pub seed_limit: Option<usize>,
    pub mcts: MctsConfig,
    pub voc: VocConfig,
    pub generation: GenerationParams,
    pub providers: ProvidersConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_seed: 0,
            seed_limit: None,
            mcts: MctsConfig::default(),
            voc: VocConfig::default(),
            generation: GenerationParams::default(),
            providers: ProvidersConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {message}")]
    Invalid { message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mcts.validate().map_err(|e| ConfigError::Invalid {
            message: e.to_string(),
        })?;
        self.voc.validate().map_err(|e| ConfigError::Invalid {
            message: e.to_string(),
        })?;
        self.generation.validate().map_err(|e| ConfigError::Invalid {
            message: e.to_string(),
        })?;
        let wants_http = [self.providers.policy, self.providers.embedding, self.providers.complexity]
            .contains(&ProviderKind::Http)
            || self.providers.reward == RewardKind::Http;
        if wants_http && self.providers.http.is_none() {
            return Err(ConfigError::Invalid {
                message: "an http provider is selected but [providers.http] is missing".into(),
            });
        }
        Ok(())
    }

    /// Loads and validates a config file; a missing path yields defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let config = match path {
            None => RunConfig::default(),
            Some(path) => {
                let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                toml::from_str(&raw)?
            }
        };
        config.validate()?;
        Ok(config)
    }
}

/// Live provider handles for one run.
pub struct ProviderSet {
    pub policy: Arc<dyn PolicyModel>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub complexity: Arc<dyn ComplexityProvider>,
    pub reward: Option<Arc<dyn RewardProvider>>,
}

/// Loads a mock policy script, dispatching on its shape: a JSON object
/// with kind "toy-policy" loads the rule-driven toy policy, a bare
/// string-to-string object loads the exact-key scripted policy.
pub fn load_mock_policy(path: &Path) -> Result<Arc<dyn PolicyModel>, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| ConfigError::Invalid {
            message: format!("policy script {} is not valid JSON: {e}", path.display()),
        })?;
    let is_toy = value
        .as_object()
        .and_then(|o| o.get("kind"))
        .and_then(|k| k.as_str())
        == Some(crate::toy::TOY_SCRIPT_KIND);
    if is_toy {
        Ok(Arc::new(ToyPolicy::load(path)?))
    } else {
        Ok(Arc::new(ScriptedPolicy::load(path)?))
    }
}

/// Builds the provider set a config describes. `script_override` replaces
/// the configured mock policy script path.
pub fn build_providers(
    config: &RunConfig,
    script_override: Option<&Path>,
) -> Result<ProviderSet, ConfigError> {
    config.validate()?;
    let http: Option<Arc<HttpProvider>> = match &config.providers.http {
        Some(settings) => Some(Arc::new(HttpProvider::new(settings.to_provider_config())?)),
        None => None,
    };
    let http_handle = |role: &str| -> Result<Arc<HttpProvider>, ConfigError> {
        http.clone().ok_or_else(|| ConfigError::Invalid {
            message: format!("{role} provider is http but [providers.http] is missing"),
        })
    };

    let policy: Arc<dyn PolicyModel> = match config.providers.policy {
        ProviderKind::Http => http_handle("policy")?,
        ProviderKind::Mock => {
            let path = script_override
                .map(Path::to_path_buf)
                .or_else(|| config.providers.mock.script.clone())
                .ok_or_else(|| ConfigError::Invalid {
                    message: "mock policy requires a script path (providers.mock.script or --policy-script)"
                        .into(),
                })?;
            load_mock_policy(&path)?
        }
    };
    let embedder: Arc<dyn EmbeddingProvider> = match config.providers.embedding {
        ProviderKind::Http => http_handle("embedding")?,
        ProviderKind::Mock => Arc::new(MockEmbedder),
    };
    let complexity: Arc<dyn ComplexityProvider> = match config.providers.complexity {
        ProviderKind::Http => http_handle("complexity")?,
        ProviderKind::Mock => Arc::new(MockComplexity),
    };
    let reward: Option<Arc<dyn RewardProvider>> = match config.providers.reward {
        RewardKind::None => None,
        RewardKind::Mock => Some(Arc::new(MockOutcomeReward)),
        RewardKind::Http => Some(http_handle("reward")?),
    };
    Ok(ProviderSet {
        policy,
        embedder,
        complexity,
        reward,
    })
}
