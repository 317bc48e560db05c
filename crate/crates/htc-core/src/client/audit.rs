//! JSONL audit log of chat requests: prompt hash, usage, latency,
//! attempts. Never the prompt text or the API key.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendKind, ChatRequest, ChatResponse, ClientError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Correlation id; completion order may differ from issue order.
    pub id: u64,
    pub outcome: String,
    pub model: String,
    pub backend: Option<BackendKind>,
    pub prompt_sha256: String,
    pub doc_id: Option<String>,
    pub strategy: Option<String>,
    pub depth: Option<u32>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_ms: Option<u64>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Sink {
    File(std::fs::File),
    Memory(Vec<u8>),
}

/// Thread-safe JSONL sink.
pub struct AuditLog {
    sink: Mutex<Sink>,
    next_id: AtomicU64,
}

impl AuditLog {
    pub fn to_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = std::fs::File::create(path)?;
        Ok(AuditLog { sink: Mutex::new(Sink::File(file)), next_id: AtomicU64::new(0) })
    }

    pub fn in_memory() -> Self {
        AuditLog { sink: Mutex::new(Sink::Memory(Vec::new())), next_id: AtomicU64::new(0) }
    }

    fn write(&self, entry: &AuditEntry) {
        let mut line = serde_json::to_vec(entry).expect("audit entries serialize");
        line.push(b'\n');
        let mut sink = self.sink.lock().expect("audit sink poisoned");
        match &mut *sink {
            Sink::File(f) => {
                let _ = f.write_all(&line);
                let _ = f.flush();
            }
            Sink::Memory(buf) => buf.extend_from_slice(&line),
        }
    }

    fn base_entry(&self, req: &ChatRequest, attempts: u32) -> AuditEntry {
        AuditEntry {
            id: self.next_id.fetch_add(1, Ordering::SeqCst),
            outcome: String::new(),
            model: req.model.clone(),
            backend: None,
            prompt_sha256: sha256_hex(req.prompt_text.as_bytes()),
            doc_id: req.tag.as_ref().map(|t| t.doc_id.clone()),
            strategy: req.tag.as_ref().map(|t| t.strategy.to_string()),
            depth: req.tag.as_ref().and_then(|t| t.depth),
            prompt_tokens: None,
            completion_tokens: None,
            latency_ms: None,
            attempts,
            error: None,
        }
    }

    pub(super) fn record_ok(&self, req: &ChatRequest, resp: &ChatResponse, attempts: u32) {
        let mut entry = self.base_entry(req, attempts);
        entry.outcome = "ok".into();
        entry.backend = Some(resp.backend);
        entry.prompt_tokens = Some(resp.prompt_tokens);
        entry.completion_tokens = Some(resp.completion_tokens);
        entry.latency_ms = Some(resp.latency.as_millis() as u64);
        self.write(&entry);
    }

    pub(super) fn record_err(&self, req: &ChatRequest, err: &ClientError, attempts: u32) {
        let mut entry = self.base_entry(req, attempts);
        entry.outcome = "error".into();
        entry.error = Some(err.to_string());
        self.write(&entry);
    }

    /// Parsed entries, in-memory sink only.
    pub fn entries(&self) -> Vec<AuditEntry> {
        let sink = self.sink.lock().expect("audit sink poisoned");
        match &*sink {
            Sink::Memory(buf) => parse_entries(buf),
            Sink::File(_) => Vec::new(),
        }
    }
}

/// Parse an audit JSONL byte stream (e.g. a log file read back).
pub fn parse_entries(bytes: &[u8]) -> Vec<AuditEntry> {
    bytes
        .split(|b| *b == b'\n')
        .filter(|line| !line.is_empty())
        .filter_map(|line| serde_json::from_slice(line).ok())
        .collect()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{estimate_tokens, UsageProvenance};
    use std::time::Duration;

    #[test]
    fn records_ok_and_error_lines() {
        let log = AuditLog::in_memory();
        let req = ChatRequest::new("m", "hello world");
        let resp = ChatResponse {
            text: "hi".into(),
            prompt_tokens: estimate_tokens("hello world"),
            completion_tokens: 1,
            latency: Duration::from_millis(3),
            backend: BackendKind::Mock,
            usage: UsageProvenance::Estimated,
        };
        log.record_ok(&req, &resp, 1);
        log.record_err(&req, &ClientError::Timeout, 2);
        let entries = log.entries();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].outcome, "ok");
        assert_eq!(entries[0].prompt_tokens, Some(2));
        assert_eq!(entries[1].outcome, "error");
        assert_eq!(entries[0].id + 1, entries[1].id);
        // Prompt text itself never appears in the log.
        let raw = serde_json::to_string(&entries).unwrap();
        assert!(!raw.contains("hello world"));
    }

    #[test]
    fn sha_is_stable() {
        assert_eq!(sha256_hex(b""), sha256_hex(b""));
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }
}
