//! Deterministic mock backends for offline runs and tests.
//!
//! Three rule types: an echo oracle that answers with the gold label for
//! the tagged document and step, a scripted prompt→reply map with a
//! fallback, and a perturbing wrapper that corrupts another backend's
//! replies (case flip, punctuation append, or a seeded one-character
//! typo).

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use super::{
    estimate_tokens, BackendKind, ChatBackend, ChatRequest, ChatResponse, ClientError,
    UsageProvenance,
};
use crate::dataset::Dataset;
use crate::Strategy;

fn mock_response(req: &ChatRequest, text: String) -> ChatResponse {
    ChatResponse {
        prompt_tokens: estimate_tokens(&req.prompt_text),
        completion_tokens: estimate_tokens(&text),
        text,
        latency: Duration::ZERO,
        backend: BackendKind::Mock,
        usage: UsageProvenance::Estimated,
    }
}

/// Replies with the gold answer for the request's tagged document:
/// the gold leaf name (DL), the full ` > `-joined gold path (DH), or
/// the gold label at the tagged depth (TMH).
pub struct EchoOracle {
    answers: HashMap<String, Vec<String>>,
}

impl EchoOracle {
    pub fn new(answers: HashMap<String, Vec<String>>) -> Self {
        EchoOracle { answers }
    }

    /// Gold answers for every document in the dataset, train and test.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let answers = dataset
            .train
            .iter()
            .chain(dataset.test.iter())
            .map(|d| (d.doc_id.clone(), d.gold_names.clone()))
            .collect();
        EchoOracle { answers }
    }
}

impl ChatBackend for EchoOracle {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let tag = req
            .tag
            .as_ref()
            .ok_or_else(|| ClientError::ScriptMiss("echo oracle needs a tagged request".into()))?;
        let gold = self.answers.get(&tag.doc_id).ok_or_else(|| {
            ClientError::ScriptMiss(format!("no gold answer for doc {:?}", tag.doc_id))
        })?;
        let text = match tag.strategy {
            Strategy::Dl => gold.last().cloned().unwrap_or_default(),
            Strategy::Dh => gold.join(" > "),
            Strategy::Tmh => {
                let depth = tag.depth.unwrap_or(1) as usize;
                gold.get(depth - 1)
                    .cloned()
                    .ok_or_else(|| {
                        ClientError::ScriptMiss(format!(
                            "doc {:?} has no gold label at depth {depth}",
                            tag.doc_id
                        ))
                    })?
            }
        };
        Ok(mock_response(req, text))
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
}

/// Fixed prompt→reply map. Misses return the fallback reply, or
/// [`ClientError::ScriptMiss`] in strict mode.
pub struct ScriptedBackend {
    replies: HashMap<String, String>,
    fallback: String,
    strict: bool,
}

impl ScriptedBackend {
    pub fn new(replies: HashMap<String, String>) -> Self {
        ScriptedBackend { replies, fallback: String::new(), strict: false }
    }

    pub fn with_fallback(mut self, fallback: &str) -> Self {
        self.fallback = fallback.to_string();
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    /// Exact prompt match first, then substring keys in sorted order so
    /// overlapping keys still resolve deterministically.
    pub fn reply_for(&self, prompt: &str) -> Option<&str> {
        if let Some(exact) = self.replies.get(prompt) {
            return Some(exact);
        }
        let mut keys: Vec<&String> = self.replies.keys().collect();
        keys.sort();
        keys.into_iter().find(|k| prompt.contains(k.as_str())).map(|k| self.replies[k].as_str())
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        match self.reply_for(&req.prompt_text) {
            Some(reply) => Ok(mock_response(req, reply.to_string())),
            None if self.strict => Err(ClientError::ScriptMiss(format!(
                "prompt sha {}",
                super::audit::sha256_hex(req.prompt_text.as_bytes())
            ))),
            None => Ok(mock_response(req, self.fallback.clone())),
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
}

/// Reply corruption applied by [`PerturbingBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Toggle the case of every alphabetic character.
    CaseFlip,
    /// Append one punctuation character.
    AppendPunctuation(char),
    /// Delete one interior character at a seed-determined position:
    /// index `1 + (seed mod (len - 2))` for len ≥ 3, the last character
    /// otherwise. Guarantees edit distance exactly 1 on letter content.
    Typo { seed: u64 },
}

impl Corruption {
    pub fn apply(&self, s: &str) -> String {
        match self {
            Corruption::CaseFlip => s
                .chars()
                .map(|c| {
                    if c.is_uppercase() {
                        c.to_lowercase().next().unwrap_or(c)
                    } else if c.is_lowercase() {
                        c.to_uppercase().next().unwrap_or(c)
                    } else {
                        c
                    }
                })
                .collect(),
            Corruption::AppendPunctuation(p) => format!("{s}{p}"),
            Corruption::Typo { seed } => {
                let chars: Vec<char> = s.chars().collect();
                let len = chars.len();
                if len == 0 {
                    return String::new();
                }
                let drop = if len >= 3 { 1 + (*seed as usize % (len - 2)) } else { len - 1 };
                chars
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != drop)
                    .map(|(_, c)| c)
                    .collect()
            }
        }
    }
}

/// Wraps another backend and corrupts its reply text.
pub struct PerturbingBackend {
    inner: Arc<dyn ChatBackend>,
    corruption: Corruption,
}

impl PerturbingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, corruption: Corruption) -> Self {
        PerturbingBackend { inner, corruption }
    }
}

impl ChatBackend for PerturbingBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let inner = self.inner.complete(req)?;
        let corrupted = self.corruption.apply(&inner.text);
        Ok(ChatResponse {
            completion_tokens: estimate_tokens(&corrupted),
            text: corrupted,
            ..inner
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
}
