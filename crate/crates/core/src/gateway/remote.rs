use serde_json::{json, Value};

use super::{BackendConfig, GatewayError};

/// Text-completion endpoint speaking `{"model", "prompt", "max_tokens"}`.
pub(super) struct RemoteBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    credential_env_var: String,
    credential_header: String,
    credential_prefix: String,
    max_tokens: u32,
    stop: Option<Vec<String>>,
    response_pointer: String,
    timeout: std::time::Duration,
}

impl RemoteBackend {
    pub(super) fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model_name.clone(),
            credential_env_var: cfg.credential_env_var.clone(),
            credential_header: cfg.credential_header.clone(),
            credential_prefix: cfg.credential_prefix.clone(),
            max_tokens: cfg.max_tokens,
            stop: cfg.stop.clone(),
            response_pointer: cfg.response_pointer.clone(),
            timeout: cfg.timeout(),
        })
    }

    pub(super) async fn send(&self, prompt: &str) -> Result<String, GatewayError> {
        let secret = std::env::var(&self.credential_env_var)
            .ok()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                GatewayError::Auth(format!("environment variable {} is not set", self.credential_env_var))
            })?;

        let mut body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
        });
        if let Some(stop) = &self.stop {
            body["stop"] = json!(stop);
        }

        let response = self
            .client
            .post(&self.endpoint)
            .header(
                self.credential_header.as_str(),
                format!("{}{secret}", self.credential_prefix),
            )
            .json(&body)
            .send()
            .await
            .map_err(|e| classify(e, self.timeout))?;

        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(GatewayError::Auth(format!("endpoint answered {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Transport(format!("endpoint answered {status}")));
        }
        let doc: Value = response.json().await.map_err(|e| classify(e, self.timeout))?;
        doc.pointer(&self.response_pointer)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::MalformedResponse(format!("no string at {}", self.response_pointer)))
    }
}

fn classify(e: reqwest::Error, timeout: std::time::Duration) -> GatewayError {
    if e.is_timeout() {
        GatewayError::Timeout(timeout)
    } else if e.is_decode() {
        GatewayError::MalformedResponse(e.to_string())
    } else {
        // without_url keeps query strings (which may carry keys) out of messages
        GatewayError::Transport(e.without_url().to_string())
    }
}
