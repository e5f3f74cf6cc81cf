//! Durable response cache: append-friendly JSONL keyed by request digest,
//! usable as a write-through layer over a live backend or standalone for
//! replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    cache_key, classify_body, summarize_body, Backend, BackendConfig, BackendError, BackendKind,
    CallStats, ClassifyRequest, ClassifyResponse, StatsCell, SummarizeRequest, SummarizeResponse,
};
use crate::program::{Label, Outcome};

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    response: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ClassifyWire {
    raw_text: String,
    parsed: Option<String>,
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Serialize, Deserialize)]
struct SummarizeWire {
    instruction: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Persistent key/value store over a JSONL file. Later records for the same
/// key win; corrupt lines are skipped with a warning.
pub struct JsonlCache {
    entries: Mutex<HashMap<String, serde_json::Value>>,
    file: Mutex<File>,
}

impl JsonlCache {
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (line_no, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(record) => {
                        entries.insert(record.key, record.response);
                    }
                    Err(e) => {
                        eprintln!(
                            "warning: skipping corrupt cache entry at {}:{}: {e}",
                            path.display(),
                            line_no + 1
                        );
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlCache {
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn get(&self, key: &str) -> Option<serde_json::Value> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn put(&self, key: &str, response: serde_json::Value) -> Result<(), BackendError> {
        let record = CacheRecord {
            key: key.to_string(),
            response: response.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        {
            let mut file = self.file.lock().unwrap();
            writeln!(file, "{line}")?;
        }
        self.entries.lock().unwrap().insert(key.to_string(), response);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cache layer over a backend. With an inner backend it records misses;
/// without one (replay) a miss is an error, never a silent live call.
pub struct CacheLayer {
    inner: Option<Box<dyn Backend>>,
    cache: JsonlCache,
    key_kind: BackendKind,
    model_id: String,
    temperature: f64,
    stats: StatsCell,
}

impl CacheLayer {
    pub fn recording(
        inner: Box<dyn Backend>,
        cfg: &BackendConfig,
        path: &Path,
    ) -> Result<Self, BackendError> {
        Ok(CacheLayer {
            inner: Some(inner),
            cache: JsonlCache::open(path)?,
            key_kind: cfg.kind,
            model_id: cfg.model_id.clone(),
            temperature: cfg.temperature,
            stats: StatsCell::default(),
        })
    }

    pub fn replay(cfg: &BackendConfig, path: &Path) -> Result<Self, BackendError> {
        Ok(CacheLayer {
            inner: None,
            cache: JsonlCache::open(path)?,
            key_kind: cfg.replay_source,
            model_id: cfg.model_id.clone(),
            temperature: cfg.temperature,
            stats: StatsCell::default(),
        })
    }

    fn classify_key(&self, req: &ClassifyRequest) -> String {
        cache_key(
            self.key_kind,
            &self.model_id,
            self.temperature,
            &req.template_id,
            &classify_body(req),
            None,
        )
    }

    fn summarize_key(&self, req: &SummarizeRequest) -> String {
        cache_key(
            self.key_kind,
            &self.model_id,
            self.temperature,
            &req.template_id,
            &summarize_body(req),
            Some(req.rng_seed),
        )
    }
}

impl Backend for CacheLayer {
    fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError> {
        let key = self.classify_key(req);
        if let Some(value) = self.cache.get(&key) {
            let wire: ClassifyWire = serde_json::from_value(value)
                .map_err(|e| BackendError::Cache(format!("bad classify entry {key}: {e}")))?;
            let parsed = match wire.parsed {
                Some(text) => match req.label_vocab.iter().find(|l| l.as_str() == text) {
                    Some(label) => Outcome::Label(label.clone()),
                    None => Outcome::Label(
                        Label::new(&text).map_err(|e| BackendError::Cache(e.to_string()))?,
                    ),
                },
                None => Outcome::Unparsed,
            };
            self.stats.record(true, wire.prompt_tokens, wire.completion_tokens);
            return Ok(ClassifyResponse {
                raw_text: wire.raw_text,
                parsed,
                prompt_tokens: wire.prompt_tokens,
                completion_tokens: wire.completion_tokens,
                cached: true,
            });
        }
        match &self.inner {
            None => Err(BackendError::ReplayMiss(key)),
            Some(inner) => {
                let response = inner.classify(req)?;
                self.stats
                    .record(false, response.prompt_tokens, response.completion_tokens);
                let wire = ClassifyWire {
                    raw_text: response.raw_text.clone(),
                    parsed: response.parsed.as_label().map(|l| l.as_str().to_string()),
                    prompt_tokens: response.prompt_tokens,
                    completion_tokens: response.completion_tokens,
                };
                self.cache.put(&key, serde_json::to_value(wire).unwrap())?;
                Ok(response)
            }
        }
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, BackendError> {
        let key = self.summarize_key(req);
        if let Some(value) = self.cache.get(&key) {
            let wire: SummarizeWire = serde_json::from_value(value)
                .map_err(|e| BackendError::Cache(format!("bad summarize entry {key}: {e}")))?;
            self.stats.record(true, wire.prompt_tokens, wire.completion_tokens);
            return Ok(SummarizeResponse {
                instruction: wire.instruction,
                prompt_tokens: wire.prompt_tokens,
                completion_tokens: wire.completion_tokens,
                cached: true,
            });
        }
        match &self.inner {
            None => Err(BackendError::ReplayMiss(key)),
            Some(inner) => {
                let response = inner.summarize(req)?;
                self.stats
                    .record(false, response.prompt_tokens, response.completion_tokens);
                let wire = SummarizeWire {
                    instruction: response.instruction.clone(),
                    prompt_tokens: response.prompt_tokens,
                    completion_tokens: response.completion_tokens,
                };
                self.cache.put(&key, serde_json::to_value(wire).unwrap())?;
                Ok(response)
            }
        }
    }

    fn stats(&self) -> CallStats {
        self.stats.snapshot()
    }
}
