//! Chat-completions HTTP backend for hosted models.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{AdvisorBackend, BackendError, DecodeParams};

/// Environment variable holding the chat-completions base URL.
pub const ADVISOR_URL_ENV: &str = "ROUTEQ_ADVISOR_URL";
/// Environment variable holding the bearer token.
pub const ADVISOR_TOKEN_ENV: &str = "ROUTEQ_ADVISOR_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL up to but excluding `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
}

impl RemoteConfig {
    /// Read URL and token from the environment.
    pub fn from_env(model: impl Into<String>) -> Result<Self, BackendError> {
        let base_url = std::env::var(ADVISOR_URL_ENV)
            .map_err(|_| BackendError::Unavailable(format!("{ADVISOR_URL_ENV} is not set")))?;
        Ok(RemoteConfig {
            base_url,
            model: model.into(),
            api_key: std::env::var(ADVISOR_TOKEN_ENV).ok(),
            timeout: Duration::from_secs(30),
            retries: 2,
        })
    }
}

/// De-facto chat-completions request body.
pub fn build_request_body(model: &str, prompt: &str, decode: &DecodeParams) -> serde_json::Value {
    json!({
        "model": model,
        "messages": [{ "role": "user", "content": prompt }],
        "temperature": decode.temperature,
        "max_tokens": decode.max_tokens,
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(RemoteBackend { cfg, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }
}

impl AdvisorBackend for RemoteBackend {
    fn complete(&self, prompt: &str, decode: &DecodeParams) -> Result<String, BackendError> {
        let body = build_request_body(&self.cfg.model, prompt, decode);
        let mut last_err = String::new();
        for _ in 0..=self.cfg.retries {
            let mut req = self.client.post(self.endpoint()).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => last_err = e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    if !status.is_success() {
                        last_err = format!("http status {status}");
                        continue;
                    }
                    match resp.json::<ChatResponse>() {
                        Err(e) => last_err = format!("bad response body: {e}"),
                        Ok(parsed) => {
                            return parsed
                                .choices
                                .into_iter()
                                .next()
                                .map(|c| c.message.content)
                                .ok_or_else(|| {
                                    BackendError::Unavailable("response had no choices".into())
                                });
                        }
                    }
                }
            }
        }
        Err(BackendError::Unavailable(last_err))
    }

    fn name(&self) -> &str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_follows_the_chat_schema() {
        let body = build_request_body("gpt-4o", "hello", &DecodeParams::default());
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["max_tokens"], 512);
    }

    #[test]
    fn response_content_is_extracted() {
        let raw = r#"{"choices":[{"message":{"role":"assistant","content":"[[1]]"}}]}"#;
        let parsed: ChatResponse = serde_json::from_str(raw).unwrap();
        assert_eq!(parsed.choices[0].message.content, "[[1]]");
    }
}
