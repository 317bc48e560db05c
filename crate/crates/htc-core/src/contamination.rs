//! Dataset-regeneration contamination probe and verdict rules.
//!
//! The probe asks the model to generate the first instances of a named
//! dataset, then categorizes the response with deterministic rules:
//! contaminated (a long verbatim substring of a reference instance),
//! suspicious (multiple attribute names reproduced without instance
//! text), safety_filtered (a refusal pattern), else clean. Precedence
//! is total: contaminated > suspicious > safety_filtered > clean.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::client::{ChatRequest, ClientError, LlmClient};
use crate::dataset::{CsvSchema, Dataset};
use crate::normalize::normalize_text;
use crate::prompts::{render_contamination, PromptTemplates};

/// Verdict categories, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Contaminated,
    Suspicious,
    SafetyFiltered,
    Clean,
}

/// One probe target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub dataset_name: String,
    #[serde(default)]
    pub split: Option<String>,
    pub format: String,
}

/// What the categorizer compares a response against.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContaminationReference {
    /// Column/attribute names of the dataset file.
    pub attributes: Vec<String>,
    /// Instance texts (inputs and labels) as released.
    pub instances: Vec<String>,
}

impl ContaminationReference {
    pub fn from_dataset(dataset: &Dataset, schema: &CsvSchema) -> Self {
        let mut attributes = vec![schema.text_column.clone()];
        attributes.extend(schema.label_columns.iter().cloned());
        let instances = dataset
            .train
            .iter()
            .chain(dataset.test.iter())
            .map(|d| d.text.clone())
            .collect();
        ContaminationReference { attributes, instances }
    }
}

/// Tunable rule thresholds; defaults documented in the README.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationRules {
    /// Minimum verbatim overlap, in normalized characters, for a
    /// contaminated verdict.
    pub min_overlap_chars: usize,
    /// Minimum count of distinct attribute names for suspicious.
    pub min_attribute_matches: usize,
    /// Case-insensitive substrings that mark a refusal.
    pub refusal_patterns: Vec<String>,
}

impl Default for ContaminationRules {
    fn default() -> Self {
        ContaminationRules {
            min_overlap_chars: 40,
            min_attribute_matches: 2,
            refusal_patterns: default_refusal_patterns(),
        }
    }
}

pub fn default_refusal_patterns() -> Vec<String> {
    [
        "i'm sorry",
        "i am sorry",
        "i cannot",
        "i can't",
        "i won't",
        "unable to provide",
        "cannot assist",
        "can't assist",
        "not able to share",
        "as an ai",
        "against my guidelines",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

impl ContaminationRules {
    /// Load refusal patterns from a plain-text file, one per line;
    /// blank lines and `#` comments ignored.
    pub fn with_refusal_file(mut self, path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        self.refusal_patterns = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        Ok(self)
    }
}

/// One categorized probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationVerdict {
    pub dataset_name: String,
    pub split: Option<String>,
    pub format: String,
    pub verdict: Verdict,
    /// Matched substring, matched attribute names, or matched refusal
    /// pattern — whatever justified the verdict.
    pub evidence: String,
    pub raw_response: String,
}

fn char_windows(chars: &[char], width: usize) -> impl Iterator<Item = String> + '_ {
    (0..chars.len().saturating_sub(width.saturating_sub(1)))
        .map(move |i| chars[i..i + width].iter().collect())
}

/// Longest-known-substring check: does any `min_overlap_chars`-wide
/// normalized window of a reference instance appear verbatim in the
/// normalized response?
fn contaminated_evidence(
    response_norm: &str,
    reference: &ContaminationReference,
    width: usize,
) -> Option<String> {
    if width == 0 {
        return None;
    }
    let resp_chars: Vec<char> = response_norm.chars().collect();
    if resp_chars.len() < width {
        return None;
    }
    let resp_windows: HashSet<String> = char_windows(&resp_chars, width).collect();
    for instance in &reference.instances {
        let inst_norm = normalize_text(instance);
        let inst_chars: Vec<char> = inst_norm.chars().collect();
        for window in char_windows(&inst_chars, width) {
            if resp_windows.contains(&window) {
                return Some(window);
            }
        }
    }
    None
}

fn word_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn contains_token_sequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

fn suspicious_evidence(
    response: &str,
    reference: &ContaminationReference,
    min_matches: usize,
) -> Option<String> {
    let tokens = word_tokens(response);
    let mut matched: Vec<&str> = Vec::new();
    for attr in &reference.attributes {
        let attr_tokens = word_tokens(attr);
        if contains_token_sequence(&tokens, &attr_tokens) {
            matched.push(attr);
        }
    }
    matched.dedup();
    if matched.len() >= min_matches {
        Some(format!("attributes: {}", matched.join(", ")))
    } else {
        None
    }
}

fn refusal_evidence(response: &str, patterns: &[String]) -> Option<String> {
    let lower = response.to_lowercase();
    patterns.iter().find(|p| lower.contains(&p.to_lowercase())).cloned()
}

/// Pure verdict function: replaying a logged response reproduces the
/// verdict.
pub fn categorize(
    response: &str,
    reference: Option<&ContaminationReference>,
    rules: &ContaminationRules,
) -> (Verdict, String) {
    if let Some(reference) = reference {
        let response_norm = normalize_text(response);
        if let Some(evidence) =
            contaminated_evidence(&response_norm, reference, rules.min_overlap_chars)
        {
            return (Verdict::Contaminated, evidence);
        }
        if let Some(evidence) =
            suspicious_evidence(response, reference, rules.min_attribute_matches)
        {
            return (Verdict::Suspicious, evidence);
        }
    }
    if let Some(evidence) = refusal_evidence(response, &rules.refusal_patterns) {
        return (Verdict::SafetyFiltered, evidence);
    }
    (Verdict::Clean, String::new())
}

/// Render the probe prompt, send it with the contamination preset
/// (temperature 0, max_completion_tokens 500) and categorize the reply.
pub fn probe(
    spec: &ProbeSpec,
    model: &str,
    client: &LlmClient,
    templates: &PromptTemplates,
    reference: Option<&ContaminationReference>,
    rules: &ContaminationRules,
) -> Result<ContaminationVerdict, ClientError> {
    let prompt =
        render_contamination(templates, &spec.dataset_name, spec.split.as_deref(), &spec.format);
    let mut req = ChatRequest::new(model, prompt);
    req.temperature = 0.0;
    req.max_completion_tokens = Some(500);
    let resp = client.complete(&req)?;
    let (verdict, evidence) = categorize(&resp.text, reference, rules);
    Ok(ContaminationVerdict {
        dataset_name: spec.dataset_name.clone(),
        split: spec.split.clone(),
        format: spec.format.clone(),
        verdict,
        evidence,
        raw_response: resp.text,
    })
}

/// One battery entry: a verdict or the error that prevented one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ProbeOutcome {
    Verdict(ContaminationVerdict),
    Failed { dataset_name: String, split: Option<String>, format: String, error: String },
}

/// Run every probe sequentially; failures are recorded per spec rather
/// than aborting the battery.
pub fn battery(
    specs: &[ProbeSpec],
    model: &str,
    client: &LlmClient,
    templates: &PromptTemplates,
    references: &BTreeMap<String, ContaminationReference>,
    rules: &ContaminationRules,
) -> Vec<ProbeOutcome> {
    specs
        .iter()
        .map(|spec| {
            let reference = references.get(&spec.dataset_name);
            match probe(spec, model, client, templates, reference, rules) {
                Ok(verdict) => ProbeOutcome::Verdict(verdict),
                Err(e) => ProbeOutcome::Failed {
                    dataset_name: spec.dataset_name.clone(),
                    split: spec.split.clone(),
                    format: spec.format.clone(),
                    error: e.to_string(),
                },
            }
        })
        .collect()
}
