//! OpenAI-compatible `/chat/completions` provider.

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Base URL, e.g. `https://api.example.com/v1`. `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
    id: String,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let id = format!("http:{}", config.model);
        Ok(Self { config, client, id })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    pub fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "logprobs": request.want_logprob,
        });
        if request.want_logprob {
            body["top_logprobs"] = json!(1);
        }
        body
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

/// Parses a chat-completions response body into `(text, first label-token probability)`.
pub(crate) fn parse_completion(body: &str) -> Result<(String, Option<f64>), LlmError> {
    let parsed: CompletionBody =
        serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Malformed("no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| LlmError::Malformed("choice has no content".into()))?;
    let prob = choice
        .logprobs
        .and_then(|l| l.content)
        .and_then(|tokens| {
            tokens
                .into_iter()
                .find(|t| t.token.chars().any(char::is_alphanumeric))
        })
        .map(|t| t.logprob.exp());
    Ok((text, prob))
}

fn excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

impl ChatProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut call = self.client.post(self.endpoint()).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let (text, token_prob) = parse_completion(&body)?;
                Ok(ChatResponse {
                    text,
                    token_prob: token_prob.filter(|_| request.want_logprob),
                    provider: self.id.clone(),
                    latency_ms: 0,
                })
            }
            429 | 500..=599 => Err(LlmError::Retryable { status, body: excerpt(&body) }),
            _ => Err(LlmError::Rejected { status, body: excerpt(&body) }),
        }
    }
}
