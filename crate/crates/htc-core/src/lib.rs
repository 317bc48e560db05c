//! Hierarchical text classification over black-box chat-completion
//! models.
//!
//! The crate drives three prompting strategies — direct leaf label
//! prediction (DL), direct hierarchical path prediction (DH) and
//! top-down multi-step prediction (TMH) — against any OpenAI-compatible
//! endpoint or a deterministic mock backend, then scores per-depth and
//! parent-conditional accuracy and accounts token costs.
//!
//! Batch classification is data-parallel via rayon when the default
//! `parallel` feature is enabled; building with
//! `--no-default-features` falls back to a sequential runner with the
//! same outputs.

use serde::{Deserialize, Serialize};

pub mod client;
pub mod contamination;
pub mod cost;
pub mod dataset;
pub mod metrics;
pub mod normalize;
pub mod prompts;
pub mod strategies;
pub mod taxonomy;

/// The three prompting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Direct leaf label prediction: all leaves shown, ancestors traced.
    #[serde(rename = "DL")]
    Dl,
    /// Direct hierarchical prediction: full ` > `-joined paths shown.
    #[serde(rename = "DH")]
    Dh,
    /// Top-down multi-step: one request per depth, candidates narrowed
    /// to the children of the previous pick.
    #[serde(rename = "TMH")]
    Tmh,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dl, Strategy::Dh, Strategy::Tmh];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Dl => "DL",
            Strategy::Dh => "DH",
            Strategy::Tmh => "TMH",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DL" => Ok(Strategy::Dl),
            "DH" => Ok(Strategy::Dh),
            "TMH" => Ok(Strategy::Tmh),
            other => Err(format!("unknown strategy {other:?} (expected DL, DH or TMH)")),
        }
    }
}

pub use client::{ChatBackend, ChatRequest, ChatResponse, LlmClient};
pub use dataset::{CsvSchema, Dataset, LabeledDocument};
pub use metrics::MetricsReport;
pub use prompts::PromptTemplates;
pub use strategies::{Prediction, RunConfig, RunOutput};
pub use taxonomy::Taxonomy;
