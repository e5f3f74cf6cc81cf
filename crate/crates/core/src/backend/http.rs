//! Live chat-completions client with timeout, retry, and strict reply
//! parsing.

use std::time::Duration;

use serde::Deserialize;

use super::templates::{render_classify, render_summarize, Message};
use super::{
    parse_label_reply, Backend, BackendConfig, BackendError, CallStats, ClassifyRequest,
    ClassifyResponse, StatsCell, SummarizeRequest, SummarizeResponse, API_BASE_ENV,
    DEFAULT_API_BASE,
};

pub struct HttpChatBackend {
    cfg: BackendConfig,
    client: reqwest::blocking::Client,
    api_base: String,
    stats: StatsCell,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Usage,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChatBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let api_base = cfg
            .api_base
            .clone()
            .or_else(|| std::env::var(API_BASE_ENV).ok())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_seconds))
            .build()
            .map_err(|e| BackendError::Network {
                retries: 0,
                message: e.to_string(),
            })?;
        Ok(HttpChatBackend {
            cfg: cfg.clone(),
            client,
            api_base,
            stats: StatsCell::default(),
        })
    }

    pub fn api_key(&self) -> Result<String, BackendError> {
        std::env::var(&self.cfg.api_key_env)
            .map_err(|_| BackendError::MissingApiKey(self.cfg.api_key_env.clone()))
    }

    /// One chat call with exponential-backoff retries on transport errors
    /// and 5xx/429 statuses.
    fn chat(&self, messages: &[Message]) -> Result<(String, u64, u64), BackendError> {
        let key = self.api_key()?;
        let body = serde_json::json!({
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": messages,
        });
        let url = format!("{}/chat/completions", self.api_base.trim_end_matches('/'));
        let mut last_error = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.retry_backoff_seconds * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(backoff));
            }
            let result = self
                .client
                .post(&url)
                .bearer_auth(&key)
                .json(&body)
                .send();
            match result {
                Err(e) => last_error = e.to_string(),
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_error = format!("status {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(BackendError::Http {
                            status: status.as_u16(),
                            message: response.text().unwrap_or_default(),
                        });
                    }
                    let reply: ChatReply = response
                        .json()
                        .map_err(|e| BackendError::Protocol(e.to_string()))?;
                    let content = reply
                        .choices
                        .first()
                        .and_then(|c| c.message.content.clone())
                        .ok_or_else(|| {
                            BackendError::Protocol("reply has no message content".into())
                        })?;
                    return Ok((content, reply.usage.prompt_tokens, reply.usage.completion_tokens));
                }
            }
        }
        Err(BackendError::Network {
            retries: self.cfg.max_retries,
            message: last_error,
        })
    }
}

impl Backend for HttpChatBackend {
    fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError> {
        if req.label_vocab.len() < 2 {
            return Err(BackendError::InvalidRequest(
                "classification requires at least 2 labels".into(),
            ));
        }
        let (raw_text, prompt_tokens, completion_tokens) = self.chat(&render_classify(req))?;
        self.stats.record(false, prompt_tokens, completion_tokens);
        Ok(ClassifyResponse {
            parsed: parse_label_reply(&raw_text, &req.label_vocab),
            raw_text,
            prompt_tokens,
            completion_tokens,
            cached: false,
        })
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, BackendError> {
        if req.demonstrations.is_empty() {
            return Err(BackendError::InvalidRequest(
                "summarize requires at least one demonstration".into(),
            ));
        }
        let (raw_text, prompt_tokens, completion_tokens) = self.chat(&render_summarize(req))?;
        self.stats.record(false, prompt_tokens, completion_tokens);
        Ok(SummarizeResponse {
            instruction: raw_text.trim().to_string(),
            prompt_tokens,
            completion_tokens,
            cached: false,
        })
    }

    fn stats(&self) -> CallStats {
        self.stats.snapshot()
    }
}
