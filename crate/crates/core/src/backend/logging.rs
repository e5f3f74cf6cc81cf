//! Call-log wrapper: one JSONL row per backend call for cost accounting.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use super::{
    Backend, BackendError, CallStats, ClassifyRequest, ClassifyResponse, SummarizeRequest,
    SummarizeResponse,
};

/// Role tag for log rows: the inference engine or the rule learner.
#[derive(Debug, Clone, Copy)]
pub enum Role {
    Inference,
    Learner,
}

impl Role {
    fn tag(&self) -> &'static str {
        match self {
            Role::Inference => "M_i",
            Role::Learner => "M_l",
        }
    }
}

pub struct LoggingBackend {
    inner: Box<dyn Backend>,
    role: Role,
    writer: Mutex<File>,
}

impl LoggingBackend {
    pub fn new(inner: Box<dyn Backend>, role: Role, log_path: &Path) -> Result<Self, BackendError> {
        let writer = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(LoggingBackend {
            inner,
            role,
            writer: Mutex::new(writer),
        })
    }

    fn log(&self, call: &str, template_id: &str, cache_hit: bool, latency_ms: f64) {
        let row = serde_json::json!({
            "role": self.role.tag(),
            "call": call,
            "template_id": template_id,
            "cache_hit": cache_hit,
            "latency_ms": latency_ms,
        });
        if let Ok(mut writer) = self.writer.lock() {
            let _ = writeln!(writer, "{row}");
        }
    }
}

impl Backend for LoggingBackend {
    fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, BackendError> {
        let start = Instant::now();
        let response = self.inner.classify(req)?;
        self.log(
            "classify",
            &req.template_id,
            response.cached,
            start.elapsed().as_secs_f64() * 1e3,
        );
        Ok(response)
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, BackendError> {
        let start = Instant::now();
        let response = self.inner.summarize(req)?;
        self.log(
            "summarize",
            &req.template_id,
            response.cached,
            start.elapsed().as_secs_f64() * 1e3,
        );
        Ok(response)
    }

    fn stats(&self) -> CallStats {
        self.inner.stats()
    }
}
