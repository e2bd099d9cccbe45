//! Provider-agnostic text generation.
//!
//! A [`Provider`] turns a [`GenerationRequest`] into text. Two providers ship
//! with the crate: [`RemoteProvider`] talks to an HTTP messages endpoint with
//! retry and backoff, and [`ScriptedProvider`] answers from a fixture map
//! keyed by [`Fingerprint`] for offline runs and tests.
//!
//! [`extract`] pulls structured documents out of free-form model output.

pub mod extract;
mod remote;
mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::{extract_as, extract_structured, ExtractError, SchemaId};
pub use remote::{
    HttpTransport, RemoteProvider, RetryPolicy, Transport, TransportError, TransportReply,
};
pub use scripted::ScriptedProvider;

pub const DEFAULT_TEMPERATURE: f32 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const MAX_RETRIES_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
    System,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Agent => "agent",
            Role::System => "system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Self { role: Role::Agent, text: text.into() }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub history: Vec<Message>,
    pub temperature: f32,
    pub max_tokens: u32,
    pub locale: String,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("system_prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(&self.system_prompt, &self.history)
    }
}

/// Stable hash of a request's prompt content.
///
/// Line endings are normalised to `\n` and each text is trimmed; sampling
/// parameters and locale do not participate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub String);

impl Fingerprint {
    pub fn of(system_prompt: &str, history: &[Message]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"system\x1f");
        hasher.update(normalize(system_prompt).as_bytes());
        for message in history {
            hasher.update(b"\x1e");
            hasher.update(message.role.as_str().as_bytes());
            hasher.update(b"\x1f");
            hasher.update(normalize(&message.text).as_bytes());
        }
        Self(hex::encode(hasher.finalize()))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub provider_latency_ms: u64,
    pub truncated: bool,
    /// Transient failures absorbed before this response.
    pub retries: u32,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider rejected the request (status {status}): {message}")]
    ProviderRejected { status: u16, message: String },
    #[error("provider unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("no scripted fixture for fingerprint {0}")]
    FixtureMiss(Fingerprint),
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to load fixtures from {path}: {message}")]
    FixtureLoad { path: PathBuf, message: String },
}

impl GatewayError {
    /// Whether retrying the same call later could succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Timeout { .. } | GatewayError::Unavailable { .. })
    }
}

pub trait Provider: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        (**self).generate(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        (**self).generate(request)
    }
}

/// Validates the request, then delegates to `provider`.
pub fn generate(
    provider: &dyn Provider,
    request: &GenerationRequest,
) -> Result<GenerationResponse, GatewayError> {
    request.validate()?;
    let response = provider.generate(request)?;
    if response.text.trim().is_empty() {
        return Err(GatewayError::EmptyResponse);
    }
    Ok(response)
}

/// Sampling parameters shared by every pipeline of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f32,
    pub max_tokens: u32,
    pub locale: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            locale: "en".into(),
        }
    }
}

impl GenerationSettings {
    pub fn request(&self, system_prompt: impl Into<String>, history: Vec<Message>) -> GenerationRequest {
        GenerationRequest {
            system_prompt: system_prompt.into(),
            history,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            locale: self.locale.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Scripted,
}

pub const ENV_API_KEY: &str = "INNERPOND_API_KEY";
pub const ENV_MODEL: &str = "INNERPOND_MODEL";
pub const ENV_ENDPOINT: &str = "INNERPOND_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.anthropic.com/v1/messages";
pub const DEFAULT_MODEL: &str = "claude-3-5-sonnet-latest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub fixture_path: Option<PathBuf>,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl ProviderConfig {
    pub fn scripted(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            provider_kind: ProviderKind::Scripted,
            endpoint: None,
            model_name: "scripted".into(),
            timeout_ms: 60_000,
            max_retries: 0,
            fixture_path: Some(fixture_path.into()),
            api_key: None,
        }
    }

    /// Remote configuration from `INNERPOND_API_KEY`, `INNERPOND_MODEL` and
    /// `INNERPOND_ENDPOINT`.
    pub fn remote_from_env() -> Self {
        Self {
            provider_kind: ProviderKind::Remote,
            endpoint: Some(std::env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.into())),
            model_name: std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into()),
            timeout_ms: 60_000,
            max_retries: 3,
            fixture_path: None,
            api_key: std::env::var(ENV_API_KEY).ok(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::InvalidConfig(format!(
                "max_retries {} exceeds {}",
                self.max_retries, MAX_RETRIES_LIMIT
            )));
        }
        match self.provider_kind {
            ProviderKind::Remote if self.endpoint.as_deref().unwrap_or("").is_empty() => {
                Err(GatewayError::InvalidConfig("remote provider needs an endpoint".into()))
            }
            ProviderKind::Scripted if self.fixture_path.is_none() => {
                Err(GatewayError::InvalidConfig("scripted provider needs a fixture path".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Provider>, GatewayError> {
        self.validate()?;
        Ok(match self.provider_kind {
            ProviderKind::Scripted => {
                let path = self.fixture_path.as_ref().expect("validated");
                Arc::new(ScriptedProvider::from_file(path)?)
            }
            ProviderKind::Remote => {
                let transport = HttpTransport::new(
                    self.endpoint.clone().expect("validated"),
                    self.model_name.clone(),
                    self.api_key.clone(),
                    std::time::Duration::from_millis(self.timeout_ms),
                )?;
                Arc::new(RemoteProvider::new(transport, RetryPolicy::new(self.max_retries)))
            }
        })
    }
}
