//! Drives a classification run: each test document is taken to a full
//! predicted label path with the configured strategy, then scored and
//! cost-accounted.
//!
//! Documents are classified in parallel via rayon when the `parallel`
//! feature is enabled (bounded by `RunConfig::concurrency`); the
//! sequential runner produces identical output in dataset order either
//! way. The multi-step strategy's depth steps for one document are
//! always strictly sequential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatRequest, ClientError, LlmClient, RequestTag, UsageProvenance};
use crate::cost::{self, CostReport, PriceTable};
use crate::dataset::{Dataset, DatasetError, LabeledDocument};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::normalize::resolve_label;
use crate::prompts::{render_dh, render_dl, render_tmh_step, PromptError, PromptTemplates};
use crate::taxonomy::{ParsedPath, Taxonomy};
use crate::Strategy;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("authentication failed, aborting run: {0}")]
    Auth(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Parameters of one experiment cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub k_shot: usize,
    pub seed: u64,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default)]
    pub max_completion_tokens: Option<u32>,
    #[serde(default)]
    pub price_table: PriceTable,
    pub concurrency: usize,
}

impl RunConfig {
    pub fn new(strategy: Strategy, k_shot: usize, seed: u64, model: &str) -> Self {
        RunConfig {
            strategy,
            k_shot,
            seed,
            model: model.to_string(),
            temperature: 1.0,
            top_p: 1.0,
            max_completion_tokens: None,
            price_table: PriceTable::default(),
            concurrency: 1,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RunError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(RunError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.price_table.input_per_million.is_sign_negative()
            || self.price_table.output_per_million.is_sign_negative()
        {
            return Err(RunError::Config("prices must be non-negative".into()));
        }
        Ok(())
    }
}

/// How a predicted label at one depth was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionSource {
    /// DL: the completion resolved against all leaf names.
    LeafResolve,
    /// DL: ancestor implied by the resolved leaf.
    AncestorTrace,
    /// DH: one ` > ` segment of a parsed path.
    PathSegment,
    /// DH: whole completion resolved against all formatted leaf paths.
    PathFallback,
    /// TMH: per-depth step resolution.
    Step,
}

/// Per-depth resolution metadata kept alongside a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub depth: u32,
    pub label: String,
    /// Normalized Levenshtein distance to the raw output; absent for
    /// depths implied by ancestor tracing.
    pub distance: Option<usize>,
    pub exact: Option<bool>,
    pub source: ResolutionSource,
}

/// Raw completion text, attached to a depth step or to the whole
/// document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutput {
    /// `None` for single-request strategies, the step depth otherwise.
    pub depth: Option<u32>,
    pub text: String,
}

/// Token usage summed over every request made for one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provenance: UsageProvenance,
}

impl UsageTotals {
    fn absorb(&mut self, prompt: u64, completion: u64, provenance: UsageProvenance, first: bool) {
        self.prompt_tokens += prompt;
        self.completion_tokens += completion;
        if first {
            self.provenance = provenance;
        } else if self.provenance != provenance {
            self.provenance = UsageProvenance::Mixed;
        }
    }
}

/// One document's classification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    /// Predicted label names, depth 1 first. Shorter than the taxonomy
    /// depth only when a later step failed or landed on a shallow leaf.
    pub predicted: Vec<String>,
    pub raw_outputs: Vec<RawOutput>,
    pub resolution: Vec<ResolutionRecord>,
    pub usage: UsageTotals,
    /// Number of chat requests issued for this document.
    pub steps: u32,
    /// Depth whose request failed, when the path was truncated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_at: Option<u32>,
}

/// A document that produced no prediction at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub error: String,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub predictions: Vec<Prediction>,
    pub failures: Vec<DocFailure>,
    pub metrics: MetricsReport,
    pub cost: CostReport,
    /// The few-shot examples used for every document of the run.
    pub few_shot_ids: Vec<String>,
}

fn request(cfg: &RunConfig, prompt_text: String, tag: RequestTag) -> ChatRequest {
    ChatRequest {
        model: cfg.model.clone(),
        prompt_text,
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        max_completion_tokens: cfg.max_completion_tokens,
        tag: Some(tag),
    }
}

/// Map a raw DL completion onto a full label path: resolve against all
/// leaf names, then trace ancestors. Pure; shared by the live runner
/// and offline re-scoring.
pub fn resolve_dl_completion(
    t: &Taxonomy,
    completion: &str,
) -> (Vec<String>, Vec<ResolutionRecord>) {
    let leaves = t.leaves();
    let names: Vec<&str> = leaves.iter().map(|n| n.name.as_str()).collect();
    let resolved =
        resolve_label(completion.trim(), &names).expect("leaf candidate set is non-empty");
    let leaf = leaves
        .iter()
        .find(|n| n.name == resolved.label)
        .expect("resolved label is a member of the candidate set");
    let path = t.ancestor_path(leaf.id).expect("leaf id is valid");
    let names = t.path_names(&path);
    let leaf_depth = names.len() as u32;
    let resolution = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let depth = i as u32 + 1;
            if depth == leaf_depth {
                ResolutionRecord {
                    depth,
                    label: name.clone(),
                    distance: Some(resolved.distance),
                    exact: Some(resolved.exact),
                    source: ResolutionSource::LeafResolve,
                }
            } else {
                ResolutionRecord {
                    depth,
                    label: name.clone(),
                    distance: None,
                    exact: None,
                    source: ResolutionSource::AncestorTrace,
                }
            }
        })
        .collect();
    (names, resolution)
}

/// Classify by direct leaf label prediction: one request over all leaf
/// names, ancestors derived by parent tracing.
pub fn classify_dl(
    doc: &LabeledDocument,
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Prediction, ClientError> {
    let prompt = render_dl(t, templates, few_shot, &doc.text)
        .map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    let tag = RequestTag { doc_id: doc.doc_id.clone(), strategy: Strategy::Dl, depth: None };
    let resp = client.complete(&request(cfg, prompt.text, tag))?;
    let (names, resolution) = resolve_dl_completion(t, &resp.text);
    let mut usage = UsageTotals {
        prompt_tokens: 0,
        completion_tokens: 0,
        provenance: UsageProvenance::Estimated,
    };
    usage.absorb(resp.prompt_tokens, resp.completion_tokens, resp.usage, true);
    Ok(Prediction {
        doc_id: doc.doc_id.clone(),
        predicted: names,
        raw_outputs: vec![RawOutput { depth: None, text: resp.text }],
        resolution,
        usage,
        steps: 1,
        truncated_at: None,
    })
}

/// Map a raw DH completion onto a path. A completion that parses to a
/// complete root→leaf path is adopted segment-wise; anything else falls
/// back to whole-string resolution against every formatted leaf path,
/// which always yields a valid path. Pure; shared by the live runner
/// and offline re-scoring.
pub fn resolve_dh_completion(
    t: &Taxonomy,
    completion: &str,
) -> (Vec<String>, Vec<ResolutionRecord>) {
    let completion = completion.trim();
    let parsed = t.parse_path(completion).ok();
    if let Some(ParsedPath::Resolved { path, segments }) = parsed {
        let ends_at_leaf = path
            .leaf()
            .map(|id| t.node(id).map(|n| n.is_leaf()).unwrap_or(false))
            .unwrap_or(false);
        if ends_at_leaf {
            let names = t.path_names(&path);
            let resolution = segments
                .iter()
                .enumerate()
                .map(|(i, seg)| ResolutionRecord {
                    depth: i as u32 + 1,
                    label: seg.resolved.label.clone(),
                    distance: Some(seg.resolved.distance),
                    exact: Some(seg.resolved.exact),
                    source: ResolutionSource::PathSegment,
                })
                .collect();
            return (names, resolution);
        }
    }
    let formatted: Vec<String> = t.leaf_paths().iter().map(|p| t.format_path(p)).collect();
    let resolved =
        resolve_label(completion, &formatted).expect("leaf path candidate set is non-empty");
    let path = t
        .leaf_paths()
        .into_iter()
        .find(|p| t.format_path(p) == resolved.label)
        .expect("resolved label is a formatted leaf path");
    let names = t.path_names(&path);
    let resolution = names
        .iter()
        .enumerate()
        .map(|(i, name)| ResolutionRecord {
            depth: i as u32 + 1,
            label: name.clone(),
            distance: Some(resolved.distance),
            exact: Some(resolved.exact),
            source: ResolutionSource::PathFallback,
        })
        .collect();
    (names, resolution)
}

/// Classify by direct hierarchical prediction: one request over all
/// formatted leaf paths.
pub fn classify_dh(
    doc: &LabeledDocument,
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Prediction, ClientError> {
    let prompt = render_dh(t, templates, few_shot, &doc.text)
        .map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    let tag = RequestTag { doc_id: doc.doc_id.clone(), strategy: Strategy::Dh, depth: None };
    let resp = client.complete(&request(cfg, prompt.text, tag))?;
    let (names, resolution) = resolve_dh_completion(t, &resp.text);
    let mut usage = UsageTotals {
        prompt_tokens: 0,
        completion_tokens: 0,
        provenance: UsageProvenance::Estimated,
    };
    usage.absorb(resp.prompt_tokens, resp.completion_tokens, resp.usage, true);
    Ok(Prediction {
        doc_id: doc.doc_id.clone(),
        predicted: names,
        raw_outputs: vec![RawOutput { depth: None, text: resp.text }],
        resolution,
        usage,
        steps: 1,
        truncated_at: None,
    })
}

/// Replay stored top-down step completions against the taxonomy,
/// re-deriving the step candidate chain. Pure; shared with offline
/// re-scoring. `completions` are (depth, raw text), depth 1 first.
pub fn resolve_tmh_completions(
    t: &Taxonomy,
    completions: &[(u32, String)],
) -> (Vec<String>, Vec<ResolutionRecord>) {
    let mut names = Vec::new();
    let mut resolution = Vec::new();
    let mut parent: Option<crate::taxonomy::NodeId> = None;
    for (depth, text) in completions {
        let level = match parent {
            None => t.roots(),
            Some(p) => match t.children(p) {
                Ok(kids) if !kids.is_empty() => kids,
                _ => break,
            },
        };
        let candidates: Vec<&str> = level.iter().map(|n| n.name.as_str()).collect();
        let resolved =
            resolve_label(text.trim(), &candidates).expect("step candidate set is non-empty");
        let node = level
            .iter()
            .find(|n| n.name == resolved.label)
            .expect("resolved label is a member of the candidate set");
        names.push(node.name.clone());
        resolution.push(ResolutionRecord {
            depth: *depth,
            label: resolved.label.clone(),
            distance: Some(resolved.distance),
            exact: Some(resolved.exact),
            source: ResolutionSource::Step,
        });
        parent = Some(node.id);
    }
    (names, resolution)
}

/// Classify top-down: one request per depth, candidates narrowed to the
/// children of the previously resolved label. A failed step above depth
/// 1 truncates the path at the last successful depth; a depth-1 failure
/// fails the document.
pub fn classify_tmh(
    doc: &LabeledDocument,
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Prediction, ClientError> {
    let mut names: Vec<String> = Vec::new();
    let mut raw_outputs = Vec::new();
    let mut resolution = Vec::new();
    let mut usage = UsageTotals {
        prompt_tokens: 0,
        completion_tokens: 0,
        provenance: UsageProvenance::Estimated,
    };
    let mut steps = 0u32;
    let mut truncated_at = None;
    let mut parent = None;

    for depth in 1..=t.max_depth() {
        if let Some(p) = parent {
            let node = t.node(p).expect("parent came from this taxonomy");
            if node.is_leaf() {
                // Shallow leaf in a ragged taxonomy; missing depths are
                // scored as incorrect downstream.
                break;
            }
        }
        let prompt = render_tmh_step(t, templates, parent, few_shot, &doc.text, depth)
            .map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
        let tag = RequestTag {
            doc_id: doc.doc_id.clone(),
            strategy: Strategy::Tmh,
            depth: Some(depth),
        };
        let resp = match client.complete(&request(cfg, prompt.text, tag)) {
            Ok(r) => r,
            Err(e @ ClientError::Auth(_)) => return Err(e),
            Err(e) if depth == 1 => return Err(e),
            Err(_) => {
                truncated_at = Some(depth);
                break;
            }
        };
        steps += 1;
        usage.absorb(resp.prompt_tokens, resp.completion_tokens, resp.usage, depth == 1);

        let resolved = resolve_label(resp.text.trim(), &prompt.candidates_shown)
            .expect("step candidate set is non-empty");
        let level = match parent {
            None => t.roots(),
            Some(p) => t.children(p).expect("parent is valid"),
        };
        let node = level
            .iter()
            .find(|n| n.name == resolved.label)
            .expect("resolved label is a member of the candidate set");
        names.push(node.name.clone());
        resolution.push(ResolutionRecord {
            depth,
            label: resolved.label.clone(),
            distance: Some(resolved.distance),
            exact: Some(resolved.exact),
            source: ResolutionSource::Step,
        });
        raw_outputs.push(RawOutput { depth: Some(depth), text: resp.text });
        parent = Some(node.id);
    }

    Ok(Prediction {
        doc_id: doc.doc_id.clone(),
        predicted: names,
        raw_outputs,
        resolution,
        usage,
        steps,
        truncated_at,
    })
}

/// Classify one document with the configured strategy.
pub fn classify_one(
    doc: &LabeledDocument,
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Prediction, ClientError> {
    match cfg.strategy {
        Strategy::Dl => classify_dl(doc, t, templates, few_shot, client, cfg),
        Strategy::Dh => classify_dh(doc, t, templates, few_shot, client, cfg),
        Strategy::Tmh => classify_tmh(doc, t, templates, few_shot, client, cfg),
    }
}

/// Sequential batch runner. Output index i corresponds to `docs[i]`.
pub fn classify_batch_sequential(
    docs: &[LabeledDocument],
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Vec<Result<Prediction, ClientError>> {
    let mut aborted = false;
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        if aborted {
            out.push(Err(ClientError::Transport(
                "skipped: run aborted by an earlier authentication failure".into(),
            )));
            continue;
        }
        let result = classify_one(doc, t, templates, few_shot, client, cfg);
        if matches!(result, Err(ClientError::Auth(_))) {
            aborted = true;
        }
        out.push(result);
    }
    out
}

/// Parallel batch runner on a dedicated rayon pool of
/// `cfg.concurrency` threads. Output order is dataset order regardless
/// of completion order.
#[cfg(feature = "parallel")]
pub fn classify_batch_parallel(
    docs: &[LabeledDocument],
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Vec<Result<Prediction, ClientError>> {
    use rayon::prelude::*;
    use std::sync::atomic::{AtomicBool, Ordering};

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
        .expect("rayon pool construction");
    let abort = AtomicBool::new(false);
    pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                if abort.load(Ordering::Relaxed) {
                    return Err(ClientError::Transport(
                        "skipped: run aborted by an earlier authentication failure".into(),
                    ));
                }
                let result = classify_one(doc, t, templates, few_shot, client, cfg);
                if matches!(result, Err(ClientError::Auth(_))) {
                    abort.store(true, Ordering::Relaxed);
                }
                result
            })
            .collect()
    })
}

/// Batch runner: rayon when the `parallel` feature is enabled,
/// sequential otherwise.
pub fn classify_batch(
    docs: &[LabeledDocument],
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    client: &LlmClient,
    cfg: &RunConfig,
) -> Vec<Result<Prediction, ClientError>> {
    #[cfg(feature = "parallel")]
    {
        classify_batch_parallel(docs, t, templates, few_shot, client, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        classify_batch_sequential(docs, t, templates, few_shot, client, cfg)
    }
}

/// Run one experiment cell: sample few-shot examples once with the run
/// seed, classify every test document with them, score and aggregate.
///
/// Aborts only on configuration or authentication errors; other
/// per-document failures are recorded and excluded from accuracy
/// denominators.
pub fn run_experiment(
    dataset: &Dataset,
    cfg: &RunConfig,
    client: &LlmClient,
    templates: &PromptTemplates,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    if dataset.taxonomy.is_empty() {
        return Err(RunError::Config("dataset taxonomy is empty".into()));
    }
    let few_shot = dataset.sample_few_shot(cfg.k_shot, cfg.seed)?;
    let results = classify_batch(
        &dataset.test,
        &dataset.taxonomy,
        templates,
        &few_shot,
        client,
        cfg,
    );

    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    for (doc, result) in dataset.test.iter().zip(results) {
        match result {
            Ok(p) => predictions.push(p),
            Err(ClientError::Auth(msg)) => return Err(RunError::Auth(msg)),
            Err(e) => failures.push(DocFailure { doc_id: doc.doc_id.clone(), error: e.to_string() }),
        }
    }

    let metrics = metrics::score(
        &predictions,
        &dataset.test,
        &dataset.taxonomy,
        failures.len() as u64,
    )?;
    let cost = cost::aggregate(&predictions).priced(&cfg.price_table).map_err(|e| {
        RunError::Config(e.to_string())
    })?;
    Ok(RunOutput {
        predictions,
        failures,
        metrics,
        cost,
        few_shot_ids: few_shot.iter().map(|d| d.doc_id.clone()).collect(),
    })
}
