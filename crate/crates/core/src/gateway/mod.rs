//! Completion backends behind one interface, with round-trip latency
//! measurement.

mod mock;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::Prompt;

pub use mock::mock_rules;

pub const DEFAULT_MODEL: &str = "text-davinci-003";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("completion timed out after {0:?}")]
    Timeout(Duration),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response of {len} characters exceeds the limit of {max}")]
    OversizeResponse { len: usize, max: usize },
    #[error("response body not understood: {0}")]
    MalformedResponse(String),
    #[error("prompt not recognized by the rule backend: {0}")]
    UnparseablePrompt(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl GatewayError {
    pub fn class(&self) -> &'static str {
        match self {
            GatewayError::Timeout(_) => "timeout",
            GatewayError::Auth(_) => "auth_error",
            GatewayError::Transport(_) => "transport_error",
            GatewayError::OversizeResponse { .. } => "oversize_response",
            GatewayError::MalformedResponse(_) => "malformed_response",
            GatewayError::UnparseablePrompt(_) => "unparseable_prompt",
            GatewayError::InvalidConfig(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock,
}

/// Backend settings. The credential itself is never stored here, only the
/// name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub credential_env_var: String,
    pub credential_header: String,
    /// Prepended to the secret in the credential header.
    pub credential_prefix: String,
    pub timeout_secs: f64,
    /// Upper bound on response characters accepted from the backend.
    pub max_response_length: usize,
    /// Completion length limit sent to the remote service.
    pub max_tokens: u32,
    pub stop: Option<Vec<String>>,
    /// JSON pointer to the completion text inside the response body.
    pub response_pointer: String,
    /// One retry on transport failure. Off by default so latency figures
    /// cover exactly one request.
    pub retry_on_transport_error: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: DEFAULT_MODEL.to_owned(),
            credential_env_var: "OPENAI_API_KEY".to_owned(),
            credential_header: "Authorization".to_owned(),
            credential_prefix: "Bearer ".to_owned(),
            timeout_secs: 60.0,
            max_response_length: 65_536,
            max_tokens: 1024,
            stop: None,
            response_pointer: "/choices/0/text".to_owned(),
            retry_on_transport_error: false,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_response_length == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_response_length must be positive".into(),
            ));
        }
        if self.kind == BackendKind::Remote {
            let endpoint = self
                .endpoint
                .as_deref()
                .ok_or_else(|| GatewayError::InvalidConfig("remote backend needs an endpoint".into()))?;
            reqwest::Url::parse(endpoint)
                .map_err(|e| GatewayError::InvalidConfig(format!("endpoint {endpoint:?}: {e}")))?;
            if self.credential_env_var.is_empty() {
                return Err(GatewayError::InvalidConfig("credential_env_var is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Seconds from request send to full response receipt.
    pub latency: f64,
    pub backend_kind: BackendKind,
}

enum Backend {
    Mock,
    Remote(remote::RemoteBackend),
}

/// Shared completion client. `complete` may be called concurrently.
pub struct Gateway {
    cfg: BackendConfig,
    backend: Backend,
    in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(cfg: BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend = match cfg.kind {
            BackendKind::Mock => Backend::Mock,
            BackendKind::Remote => Backend::Remote(remote::RemoteBackend::new(&cfg)?),
        };
        Ok(Self {
            cfg,
            backend,
            in_flight: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::Relaxed)
    }

    pub async fn complete(&self, p: &Prompt) -> Result<Completion, GatewayError> {
        self.in_flight.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let result = tokio::time::timeout(self.cfg.timeout(), self.dispatch(p)).await;
        let latency = started.elapsed().as_secs_f64();
        self.in_flight.fetch_sub(1, Ordering::Relaxed);

        let text = result.map_err(|_| GatewayError::Timeout(self.cfg.timeout()))??;
        let len = text.chars().count();
        if len > self.cfg.max_response_length {
            return Err(GatewayError::OversizeResponse {
                len,
                max: self.cfg.max_response_length,
            });
        }
        Ok(Completion {
            text,
            latency,
            backend_kind: self.cfg.kind,
        })
    }

    async fn dispatch(&self, p: &Prompt) -> Result<String, GatewayError> {
        match &self.backend {
            Backend::Mock => mock_rules(p),
            Backend::Remote(r) => {
                let first = r.send(&p.assembled).await;
                match first {
                    Err(GatewayError::Transport(e)) if self.cfg.retry_on_transport_error => {
                        tracing::warn!(error = %e, "transport failure, retrying once");
                        r.send(&p.assembled).await
                    }
                    other => other,
                }
            }
        }
    }
}

/// One-shot convenience over [`Gateway`].
pub async fn complete(p: &Prompt, cfg: &BackendConfig) -> Result<Completion, GatewayError> {
    Gateway::new(cfg.clone())?.complete(p).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::example_home;
    use crate::prompt::{build_prompt, Command};

    fn prompt(cmd: &str) -> Prompt {
        build_prompt(&example_home(), &Command::new(cmd).unwrap()).unwrap()
    }

    #[tokio::test]
    async fn mock_latency_brackets_wall_clock() {
        let gw = Gateway::new(BackendConfig::mock()).unwrap();
        let p = prompt("Turn on the light.");
        let before = Instant::now();
        let c = gw.complete(&p).await.unwrap();
        let wall = before.elapsed().as_secs_f64();
        assert!(c.latency >= 0.0);
        assert!(c.latency <= wall + 1e-3);
        assert!((wall - c.latency).abs() <= 1e-3);
        assert_eq!(c.backend_kind, BackendKind::Mock);
        assert_eq!(gw.in_flight(), 0);
    }

    #[tokio::test]
    async fn oversize_response_rejected() {
        let cfg = BackendConfig {
            max_response_length: 10,
            ..BackendConfig::mock()
        };
        let err = complete(&prompt("I'm leaving"), &cfg).await.unwrap_err();
        assert!(matches!(err, GatewayError::OversizeResponse { max: 10, .. }));
    }

    #[tokio::test]
    async fn unset_credential_is_auth_error() {
        let cfg = BackendConfig {
            credential_env_var: "CASA_TEST_SURELY_UNSET_VAR".into(),
            ..BackendConfig::remote("http://127.0.0.1:9/v1/completions")
        };
        let err = complete(&prompt("Turn on the light."), &cfg).await.unwrap_err();
        assert!(matches!(err, GatewayError::Auth(_)), "{err:?}");
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig {
            timeout_secs: 0.0,
            ..BackendConfig::mock()
        }
        .validate()
        .is_err());
        assert!(BackendConfig {
            max_response_length: 0,
            ..BackendConfig::mock()
        }
        .validate()
        .is_err());
        assert!(BackendConfig {
            endpoint: None,
            ..BackendConfig::remote("x")
        }
        .validate()
        .is_err());
        assert!(BackendConfig::remote("not a url").validate().is_err());
        assert!(BackendConfig::remote("https://api.example.com/v1/completions")
            .validate()
            .is_ok());
    }

    #[test]
    fn config_document_defaults() {
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind": "remote", "endpoint": "https://x.test/v1"}"#).unwrap();
        assert_eq!(cfg.model_name, DEFAULT_MODEL);
        assert_eq!(cfg.max_tokens, 1024);
        assert_eq!(cfg.stop, None);
        assert!(!cfg.retry_on_transport_error);
    }
}
