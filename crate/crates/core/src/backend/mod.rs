//! Backends: the uniform interface behind which LLM calls happen.
//!
//! Three implementations — a live HTTP chat-completions client, a
//! deterministic rule-engine mock for hermetic tests, and a record/replay
//! cache layer that can wrap either or serve alone.

mod cache;
mod http;
mod logging;
mod rule;
pub mod templates;

pub use cache::{CacheLayer, JsonlCache};
pub use http::HttpChatBackend;
pub use logging::{LoggingBackend, Role};
pub use rule::{parse_input_pairs, parse_rule, MockRuleBackend, Rule};

use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::program::{Label, Outcome};

pub const CLASSIFY_TEMPLATE_ID: &str = "classify/v1";
pub const SUMMARIZE_TEMPLATE_ID: &str = "summarize/v1";

/// Default environment variables for live API access.
pub const API_KEY_ENV: &str = "LSP_API_KEY";
pub const API_BASE_ENV: &str = "LSP_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("HTTP error {status}: {message}")]
    Http { status: u16, message: String },
    #[error("network failure after {retries} retries: {message}")]
    Network { retries: u32, message: String },
    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("replay miss for key {0}; the cache has no recorded response")]
    ReplayMiss(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response shape: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    MockRule,
    Replay,
}

impl BackendKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BackendKind::HttpChat => "http_chat",
            BackendKind::MockRule => "mock_rule",
            BackendKind::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    pub retry_backoff_seconds: f64,
    pub parallelism_limit: usize,
    pub cache_path: Option<PathBuf>,
    pub api_base: Option<String>,
    pub api_key_env: String,
    /// Mock only: return the i-th best rule for proposal index i instead of
    /// sampling among ties.
    pub exhaustive: bool,
    /// Replay only: the kind whose recorded calls this cache replays.
    pub replay_source: BackendKind,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::MockRule,
            model_id: "mock".to_string(),
            temperature: 0.7,
            max_output_tokens: 256,
            timeout_seconds: 60.0,
            max_retries: 3,
            retry_backoff_seconds: 1.0,
            parallelism_limit: 8,
            cache_path: None,
            api_base: None,
            api_key_env: API_KEY_ENV.to_string(),
            exhaustive: false,
            replay_source: BackendKind::HttpChat,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn mock_exhaustive() -> Self {
        BackendConfig {
            exhaustive: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if self.max_output_tokens == 0 || self.parallelism_limit == 0 {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens and parallelism_limit must be positive".into(),
            ));
        }
        if self.kind == BackendKind::Replay && self.cache_path.is_none() {
            return Err(BackendError::InvalidRequest(
                "replay backend requires cache_path".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyRequest {
    pub instruction: String,
    pub input: String,
    pub label_vocab: Vec<Label>,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyResponse {
    pub raw_text: String,
    pub parsed: Outcome,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Set when the response came from a cache rather than a live call.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarizeRequest {
    pub demonstrations: Vec<(String, Label)>,
    pub label_vocab: Vec<Label>,
    pub existing_instruction: Option<String>,
    pub rng_seed: u64,
    /// Index of this proposal within its batch; drives the mock's
    /// exhaustive mode.
    pub proposal_index: usize,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarizeResponse {
    pub instruction: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CallStats {
    pub live_calls: u64,
    pub cached_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CallStats {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Shared, internally synchronized call counters.
#[derive(Debug, Default)]
pub struct StatsCell(Mutex<CallStats>);

impl StatsCell {
    pub fn record(&self, cached: bool, prompt_tokens: u64, completion_tokens: u64) {
        let mut stats = self.0.lock().unwrap();
        if cached {
            stats.cached_calls += 1;
        } else {
            stats.live_calls += 1;
        }
        stats.prompt_tokens += prompt_tokens;
        stats.completion_tokens += completion_tokens;
    }

    pub fn snapshot(&self) -> CallStats {
        *self.0.lock().unwrap()
    }
}

/// The two LLM roles behind one interface: classify (inference engine) and
/// summarize (rule learner).
pub trait Backend: Send + Sync {
    fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError>;
    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, BackendError>;
    fn stats(&self) -> CallStats;
}

/// Build a backend from its config, applying the cache layer when a
/// cache path is configured.
pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::MockRule => {
            let base: Box<dyn Backend> = Box::new(MockRuleBackend::with_mode(cfg.exhaustive));
            match &cfg.cache_path {
                Some(path) => Ok(Box::new(CacheLayer::recording(base, cfg, path)?)),
                None => Ok(base),
            }
        }
        BackendKind::HttpChat => {
            let base: Box<dyn Backend> = Box::new(HttpChatBackend::new(cfg)?);
            match &cfg.cache_path {
                Some(path) => Ok(Box::new(CacheLayer::recording(base, cfg, path)?)),
                None => Ok(base),
            }
        }
        BackendKind::Replay => {
            let path = cfg.cache_path.as_ref().expect("validated above");
            Ok(Box::new(CacheLayer::replay(cfg, path)?))
        }
    }
}

/// Collapse whitespace runs so cosmetically different requests share a key.
pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content digest identifying one backend call. Equal requests yield equal
/// keys; map keys in the canonical body are sorted by construction.
pub fn cache_key(
    kind: BackendKind,
    model_id: &str,
    temperature: f64,
    template_id: &str,
    body: &serde_json::Value,
    rng_seed: Option<u64>,
) -> String {
    let canonical = serde_json::json!({
        "kind": kind.tag(),
        "model_id": model_id,
        "temperature": temperature,
        "template_id": template_id,
        "body": body,
        "rng_seed": rng_seed,
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

pub(crate) fn classify_body(req: &ClassifyRequest) -> serde_json::Value {
    serde_json::json!({
        "instruction": normalize_ws(&req.instruction),
        "input": normalize_ws(&req.input),
        "labels": req.label_vocab.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
    })
}

pub(crate) fn summarize_body(req: &SummarizeRequest) -> serde_json::Value {
    serde_json::json!({
        "demonstrations": req.demonstrations.iter()
            .map(|(i, o)| vec![normalize_ws(i), o.as_str().to_string()])
            .collect::<Vec<_>>(),
        "labels": req.label_vocab.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
        "existing_instruction": req.existing_instruction.as_deref().map(normalize_ws),
        "proposal_index": req.proposal_index,
    })
}

/// Strict reply parsing: case-insensitive whole-token search for vocabulary
/// labels; exactly one distinct label found wins, otherwise unparsed.
pub fn parse_label_reply(raw: &str, vocab: &[Label]) -> Outcome {
    let hay = raw.to_lowercase();
    let mut found: Option<&Label> = None;
    for label in vocab {
        if contains_whole_token(&hay, &label.as_str().to_lowercase()) {
            match found {
                None => found = Some(label),
                Some(prev) if prev == label => {}
                Some(_) => return Outcome::Unparsed,
            }
        }
    }
    match found {
        Some(label) => Outcome::Label(label.clone()),
        None => Outcome::Unparsed,
    }
}

fn contains_whole_token(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    for (idx, _) in hay.match_indices(needle) {
        let before_ok = hay[..idx]
            .chars()
            .next_back()
            .map_or(true, |c| !c.is_alphanumeric());
        let after_ok = hay[idx + needle.len()..]
            .chars()
            .next()
            .map_or(true, |c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(labels: &[&str]) -> Vec<Label> {
        labels.iter().map(|l| Label::new(l).unwrap()).collect()
    }

    #[test]
    fn reply_parsing_unique_whole_token() {
        let v = vocab(&["foo", "bar"]);
        assert_eq!(
            parse_label_reply("It is clearly Bar.", &v),
            Outcome::Label(Label::new("bar").unwrap())
        );
        assert_eq!(parse_label_reply("foo or bar", &v), Outcome::Unparsed);
        assert_eq!(parse_label_reply("neither", &v), Outcome::Unparsed);
        // substring of a larger token does not count
        assert_eq!(parse_label_reply("foobar", &v), Outcome::Unparsed);
        // repeated mentions of one label are still unambiguous
        assert_eq!(
            parse_label_reply("foo. definitely FOO!", &v),
            Outcome::Label(Label::new("foo").unwrap())
        );
    }

    #[test]
    fn cache_keys_equal_for_equal_requests() {
        let req = ClassifyRequest {
            instruction: "on x1:  A1->foo".into(),
            input: "x1=A1".into(),
            label_vocab: vocab(&["foo", "bar"]),
            template_id: CLASSIFY_TEMPLATE_ID.into(),
        };
        let whitespace_variant = ClassifyRequest {
            instruction: "on x1: A1->foo".into(),
            ..req.clone()
        };
        let k1 = cache_key(
            BackendKind::MockRule,
            "mock",
            0.7,
            CLASSIFY_TEMPLATE_ID,
            &classify_body(&req),
            None,
        );
        let k2 = cache_key(
            BackendKind::MockRule,
            "mock",
            0.7,
            CLASSIFY_TEMPLATE_ID,
            &classify_body(&whitespace_variant),
            None,
        );
        assert_eq!(k1, k2);
        let k3 = cache_key(
            BackendKind::HttpChat,
            "mock",
            0.7,
            CLASSIFY_TEMPLATE_ID,
            &classify_body(&req),
            None,
        );
        assert_ne!(k1, k3);
    }
}
