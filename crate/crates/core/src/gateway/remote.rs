use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};

use super::{GatewayError, GenerationRequest, GenerationResponse, Provider, Role};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportReply {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: rate limits, overload, 5xx, dropped connections.
    Transient(String),
    Timeout,
    /// Not worth retrying.
    Rejected { status: u16, message: String },
}

/// One attempt at a provider call.
pub trait Transport: Send + Sync {
    fn send(&self, request: &GenerationRequest) -> Result<TransportReply, TransportError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        Self {
            max_retries: max_retries.min(super::MAX_RETRIES_LIMIT),
            base_delay: Duration::from_millis(500),
            jitter: true,
        }
    }

    /// No sleeping between attempts.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            base_delay: Duration::ZERO,
            jitter: false,
            ..Self::new(max_retries)
        }
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`, scaled
    /// into `[0.5, 1.0]` of that value when jitter is on.
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(16));
        if self.jitter && !exp.is_zero() {
            exp.mul_f64(rand::rng().random_range(0.5..=1.0))
        } else {
            exp
        }
    }
}

/// Provider over a [`Transport`] with exponential backoff on transient
/// failures.
pub struct RemoteProvider<T> {
    transport: T,
    policy: RetryPolicy,
}

impl<T: Transport> RemoteProvider<T> {
    pub fn new(transport: T, policy: RetryPolicy) -> Self {
        Self { transport, policy }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: Transport> Provider for RemoteProvider<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let started = Instant::now();
        let mut retries = 0;
        loop {
            let attempts = retries + 1;
            let failure = match self.transport.send(request) {
                Ok(reply) => {
                    return Ok(GenerationResponse {
                        text: reply.text,
                        provider_latency_ms: started.elapsed().as_millis() as u64,
                        truncated: reply.truncated,
                        retries,
                    })
                }
                Err(TransportError::Rejected { status, message }) => {
                    return Err(GatewayError::ProviderRejected { status, message })
                }
                Err(e) => e,
            };
            if retries >= self.policy.max_retries {
                return Err(match failure {
                    TransportError::Timeout => GatewayError::Timeout { attempts },
                    TransportError::Transient(message) => {
                        GatewayError::Unavailable { attempts, message }
                    }
                    TransportError::Rejected { .. } => unreachable!(),
                });
            }
            let delay = self.policy.delay(retries);
            log::warn!(
                "provider attempt {attempts} failed ({failure:?}); retry {} in {delay:?}",
                retries + 1
            );
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            retries += 1;
        }
    }
}

/// Blocking HTTP transport speaking the Anthropic messages format.
///
/// The client is built on first use so that constructing the transport from
/// inside an async runtime is safe.
pub struct HttpTransport {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpTransport {
    pub fn new(
        endpoint: String,
        model: String,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        if endpoint.is_empty() {
            return Err(GatewayError::InvalidConfig("empty endpoint".into()));
        }
        Ok(Self {
            endpoint,
            model,
            api_key,
            timeout,
            client: OnceLock::new(),
        })
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(self.timeout)
                .build()
                .expect("http client")
        })
    }

    /// Request body for the messages endpoint.
    pub fn body(&self, request: &GenerationRequest) -> Value {
        json!({
            "model": self.model,
            "system": request.system_prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": wire_messages(request),
        })
    }
}

/// Folds the role-tagged history into strictly alternating user/assistant
/// turns starting with a user turn. System entries become bracketed user
/// text.
pub(crate) fn wire_messages(request: &GenerationRequest) -> Vec<Value> {
    let mut out: Vec<(&'static str, String)> = Vec::new();
    for message in &request.history {
        let (role, text) = match message.role {
            Role::User => ("user", message.text.clone()),
            Role::Agent => ("assistant", message.text.clone()),
            Role::System => ("user", format!("[System] {}", message.text)),
        };
        match out.last_mut() {
            Some((last_role, last_text)) if *last_role == role => {
                last_text.push_str("\n\n");
                last_text.push_str(&text);
            }
            _ => out.push((role, text)),
        }
    }
    if out.first().map(|(role, _)| *role) != Some("user") {
        out.insert(0, ("user", "(begin)".to_string()));
    }
    out.into_iter()
        .map(|(role, content)| json!({ "role": role, "content": content }))
        .collect()
}

impl Transport for HttpTransport {
    fn send(&self, request: &GenerationRequest) -> Result<TransportReply, TransportError> {
        let mut builder = self
            .client()
            .post(&self.endpoint)
            .header("anthropic-version", "2023-06-01")
            .json(&self.body(request));
        if let Some(key) = &self.api_key {
            builder = builder.header("x-api-key", key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Transient(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body: Value = response.json().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Transient(format!("unreadable body: {e}"))
            }
        })?;
        if status == 429 || status == 529 || (500..600).contains(&status) {
            return Err(TransportError::Transient(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(TransportError::Rejected {
                status,
                message: body["error"]["message"].as_str().unwrap_or("").to_string(),
            });
        }
        let text = body["content"]
            .as_array()
            .map(|blocks| {
                blocks
                    .iter()
                    .filter_map(|b| b["text"].as_str())
                    .collect::<Vec<_>>()
                    .join("")
            })
            .unwrap_or_default();
        Ok(TransportReply {
            text,
            truncated: body["stop_reason"] == "max_tokens",
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::gateway::{GenerationSettings, Message};

    /// Fails with the scripted errors in order, then succeeds.
    struct Flaky {
        failures: Vec<TransportError>,
        attempts: AtomicU32,
    }

    impl Flaky {
        fn new(failures: Vec<TransportError>) -> Self {
            Self { failures, attempts: AtomicU32::new(0) }
        }
    }

    impl Transport for Flaky {
        fn send(&self, _: &GenerationRequest) -> Result<TransportReply, TransportError> {
            let n = self.attempts.fetch_add(1, Ordering::SeqCst) as usize;
            match self.failures.get(n) {
                Some(e) => Err(e.clone()),
                None => Ok(TransportReply { text: "ok".into(), truncated: false }),
            }
        }
    }

    fn request() -> GenerationRequest {
        GenerationSettings::default().request("sys", vec![Message::user("hi")])
    }

    #[test]
    fn two_transient_failures_then_success() {
        let flaky = Flaky::new(vec![
            TransportError::Transient("503".into()),
            TransportError::Transient("503".into()),
        ]);
        let provider = RemoteProvider::new(flaky, RetryPolicy::immediate(3));
        let response = provider.generate(&request()).unwrap();
        assert_eq!(response.text, "ok");
        assert_eq!(response.retries, 2);
        assert_eq!(provider.transport().attempts.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn attempts_bounded_by_max_retries() {
        for max_retries in 0..=5 {
            let flaky = Flaky::new(vec![TransportError::Timeout; 10]);
            let provider = RemoteProvider::new(flaky, RetryPolicy::immediate(max_retries));
            match provider.generate(&request()) {
                Err(GatewayError::Timeout { attempts }) => assert_eq!(attempts, max_retries + 1),
                other => panic!("unexpected {other:?}"),
            }
            assert_eq!(provider.transport().attempts.load(Ordering::SeqCst), max_retries + 1);
        }
    }

    #[test]
    fn rejection_is_not_retried() {
        let flaky = Flaky::new(vec![TransportError::Rejected { status: 400, message: "bad".into() }]);
        let provider = RemoteProvider::new(flaky, RetryPolicy::immediate(3));
        assert!(matches!(
            provider.generate(&request()),
            Err(GatewayError::ProviderRejected { status: 400, .. })
        ));
        assert_eq!(provider.transport().attempts.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_transient_is_unavailable() {
        let flaky = Flaky::new(vec![TransportError::Transient("overloaded".into()); 3]);
        let provider = RemoteProvider::new(flaky, RetryPolicy::immediate(2));
        assert!(matches!(
            provider.generate(&request()),
            Err(GatewayError::Unavailable { attempts: 3, .. })
        ));
    }

    #[test]
    fn backoff_doubles_within_jitter_band() {
        let policy = RetryPolicy::new(5);
        for retry in 0..4 {
            let nominal = Duration::from_millis(500 * (1 << retry));
            let d = policy.delay(retry);
            assert!(d <= nominal && d >= nominal / 2, "{d:?} vs {nominal:?}");
        }
        assert_eq!(RetryPolicy::immediate(3).delay(2), Duration::ZERO);
    }

    #[test]
    fn wire_messages_alternate_and_start_with_user() {
        let mut r = request();
        r.history = vec![
            Message::agent("intro"),
            Message::user("a"),
            Message::system("note"),
            Message::agent("b"),
        ];
        let wire = wire_messages(&r);
        let roles: Vec<_> = wire.iter().map(|m| m["role"].as_str().unwrap()).collect();
        assert_eq!(roles, ["user", "assistant", "user", "assistant"]);
        assert_eq!(wire[2]["content"], "a\n\n[System] note");
        r.history.clear();
        assert_eq!(wire_messages(&r).len(), 1);
    }
}
