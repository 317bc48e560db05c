//! Subcommand implementations. Every command except real-backend runs
//! executes fully offline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use htc_core::client::{
    estimate_tokens, AuditLog, ChatBackend, Corruption, EchoOracle, HttpBackend,
    PerturbingBackend, RetryPolicy, ScriptedBackend,
};
use htc_core::contamination::{self, ContaminationReference};
use htc_core::cost::{self, PriceTable};
use htc_core::dataset::Dataset;
use htc_core::metrics::{self, render_metrics_table};
use htc_core::prompts::{render_dh, render_dl, render_tmh_step, PromptTemplates};
use htc_core::strategies::{
    self, resolve_dh_completion, resolve_dl_completion, resolve_tmh_completions, Prediction,
    RunConfig, RunError,
};
use htc_core::{LabeledDocument, LlmClient, Strategy};

use crate::artifacts::{
    self, CostArtifact, MetricsArtifact, PredictionsHeader, PREDICTIONS_SCHEMA,
};
use crate::config::{
    BackendKindConfig, BackendSection, CorruptionConfig, LoadedConfig, LoadedContaminationSpec,
    TemplatesSection,
};

/// Exit codes: 0 ok, 1 config error, 2 auth error, 3 partial failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ConfigError,
    AuthError,
    PartialFailures,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::ConfigError => 1,
            Outcome::AuthError => 2,
            Outcome::PartialFailures => 3,
        }
    }
}

pub fn load_dataset(loaded: &LoadedConfig) -> anyhow::Result<Dataset> {
    let ds = &loaded.config.dataset;
    let schema = ds.schema();
    let dataset = match (&ds.csv, &ds.train_csv, &ds.test_csv) {
        (Some(single), None, None) => {
            let n_test = ds.n_test.expect("validated");
            Dataset::load_csv(loaded.resolve(single), &ds.name, &schema)?
                .into_holdout(n_test, ds.split_seed.unwrap_or(0))?
        }
        (None, Some(train), Some(test)) => Dataset::load_csv_pair(
            loaded.resolve(train),
            loaded.resolve(test),
            &ds.name,
            &schema,
        )?,
        _ => unreachable!("validated at load"),
    };
    Ok(dataset)
}

pub fn load_templates(
    section: Option<&TemplatesSection>,
    resolve: &dyn Fn(&Path) -> PathBuf,
) -> anyhow::Result<PromptTemplates> {
    let mut templates = PromptTemplates::default();
    if let Some(section) = section {
        if let Some(p) = &section.leaf {
            templates = templates.with_leaf_file(resolve(p))?;
        }
        if let Some(p) = &section.path {
            templates = templates.with_path_file(resolve(p))?;
        }
        if let Some(p) = &section.probe {
            templates = templates.with_probe_file(resolve(p))?;
        }
        if let Some(p) = &section.probe_split {
            templates = templates.with_probe_split_file(resolve(p))?;
        }
    }
    Ok(templates)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    replies: BTreeMap<String, String>,
    #[serde(default)]
    fallback: Option<String>,
    #[serde(default)]
    strict: bool,
}

/// Build the configured backend and wrap it in a client. The echo
/// backend needs the dataset's gold answers; the audit log, when
/// configured, is created under `audit_dir`.
pub fn build_client(
    backend: &BackendSection,
    resolve: &dyn Fn(&Path) -> PathBuf,
    dataset: Option<&Dataset>,
    audit_dir: Option<&Path>,
) -> anyhow::Result<(LlmClient, Option<Arc<AuditLog>>)> {
    let base: Arc<dyn ChatBackend> = match backend.kind {
        BackendKindConfig::Http => {
            let base_url = backend.base_url.as_deref().expect("validated");
            let api_key = match &backend.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    anyhow!("environment variable {var} named by backend.api_key_env is not set")
                })?),
                None => None,
            };
            let timeout = Duration::from_secs(backend.timeout_seconds.unwrap_or(120));
            Arc::new(HttpBackend::with_timeout(base_url, api_key, timeout))
        }
        BackendKindConfig::MockEcho => {
            let dataset = dataset
                .ok_or_else(|| anyhow!("mock-echo backend needs a dataset for gold answers"))?;
            Arc::new(EchoOracle::from_dataset(dataset))
        }
        BackendKindConfig::MockScripted => {
            let path = resolve(backend.script.as_deref().expect("validated"));
            let raw = std::fs::read_to_string(&path)
                .with_context(|| format!("reading script {}", path.display()))?;
            let script: ScriptFile = serde_json::from_str(&raw)
                .with_context(|| format!("parsing script {}", path.display()))?;
            let mut scripted = ScriptedBackend::new(script.replies.into_iter().collect());
            if let Some(fallback) = &script.fallback {
                scripted = scripted.with_fallback(fallback);
            }
            if script.strict {
                scripted = scripted.strict();
            }
            Arc::new(scripted)
        }
    };
    let base: Arc<dyn ChatBackend> = match &backend.perturb {
        None => base,
        Some(CorruptionConfig::CaseFlip) => {
            Arc::new(PerturbingBackend::new(base, Corruption::CaseFlip))
        }
        Some(CorruptionConfig::AppendPunct { punct }) => {
            Arc::new(PerturbingBackend::new(base, Corruption::AppendPunctuation(*punct)))
        }
        Some(CorruptionConfig::Typo { seed }) => {
            Arc::new(PerturbingBackend::new(base, Corruption::Typo { seed: *seed }))
        }
    };

    let retry = match backend.kind {
        // Mock failures are deterministic; retrying them only slows tests.
        BackendKindConfig::Http => RetryPolicy {
            max_retries: backend.max_retries.unwrap_or(4),
            ..RetryPolicy::default()
        },
        _ => RetryPolicy::none(),
    };
    let mut client = LlmClient::new(base).with_retry(retry);
    if let Some(n) = backend.max_in_flight {
        client = client.with_max_in_flight(n);
    }
    let audit = match (&backend.audit_log, audit_dir) {
        (Some(name), Some(dir)) => {
            let path = if name.is_absolute() { name.clone() } else { dir.join(name) };
            let log = Arc::new(
                AuditLog::to_file(&path)
                    .with_context(|| format!("creating audit log {}", path.display()))?,
            );
            client = client.with_audit(log.clone());
            Some(log)
        }
        _ => None,
    };
    Ok((client, audit))
}

/// Command-line overrides of config-file values for `run`.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub output_dir: Option<PathBuf>,
    pub strategies: Option<Vec<Strategy>>,
    pub k_shot: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub backend: Option<BackendKindConfig>,
    pub model: Option<String>,
}

impl RunOverrides {
    fn is_empty(&self) -> bool {
        self.output_dir.is_none()
            && self.strategies.is_none()
            && self.k_shot.is_none()
            && self.seed.is_none()
            && self.concurrency.is_none()
            && self.backend.is_none()
            && self.model.is_none()
    }

    /// Stable textual form folded into the config hash so artifacts
    /// reflect the effective configuration.
    fn canonical(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = &self.output_dir {
            parts.push(format!("output_dir={}", v.display()));
        }
        if let Some(v) = &self.strategies {
            let names: Vec<&str> = v.iter().map(|s| s.as_str()).collect();
            parts.push(format!("strategies={}", names.join(",")));
        }
        if let Some(v) = &self.k_shot {
            let ks: Vec<String> = v.iter().map(|k| k.to_string()).collect();
            parts.push(format!("k_shot={}", ks.join(",")));
        }
        if let Some(v) = self.seed {
            parts.push(format!("seed={v}"));
        }
        if let Some(v) = self.concurrency {
            parts.push(format!("concurrency={v}"));
        }
        if let Some(v) = self.backend {
            parts.push(format!("backend={}", v.as_str()));
        }
        if let Some(v) = &self.model {
            parts.push(format!("model={v}"));
        }
        parts.join(";")
    }

    fn apply(&self, loaded: &mut LoadedConfig) -> anyhow::Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let cfg = &mut loaded.config;
        if let Some(v) = &self.output_dir {
            cfg.run.output_dir = v.clone();
        }
        if let Some(v) = &self.strategies {
            cfg.run.strategies = v.clone();
        }
        if let Some(v) = &self.k_shot {
            cfg.run.k_shot = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.concurrency {
            cfg.run.concurrency = v;
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = v;
        }
        if let Some(v) = &self.model {
            cfg.model.name = v.clone();
        }
        cfg.backend.validate()?;
        if cfg.run.strategies.is_empty() || cfg.run.k_shot.is_empty() {
            anyhow::bail!("overrides left run.strategies or run.k_shot empty");
        }
        loaded.config_hash = crate::config::sha256_hex(
            format!("{}\noverrides:{}", loaded.config_hash, self.canonical()).as_bytes(),
        );
        Ok(())
    }
}

fn cell_dir(output_dir: &Path, strategy: Strategy, k: usize) -> PathBuf {
    output_dir.join(format!("{}-k{k}", strategy.as_str().to_lowercase()))
}

fn cell_run_config(loaded: &LoadedConfig, strategy: Strategy, k: usize) -> RunConfig {
    let cfg = &loaded.config;
    RunConfig {
        strategy,
        k_shot: k,
        seed: cfg.run.seed,
        model: cfg.model.name.clone(),
        temperature: cfg.model.temperature,
        top_p: cfg.model.top_p,
        max_completion_tokens: cfg.model.max_completion_tokens,
        price_table: cfg.prices.clone().unwrap_or_default(),
        concurrency: cfg.run.concurrency,
    }
}

/// `run`: execute every (strategy, k) cell, write artifacts, print the
/// summary tables. Flags override file values; the override set is
/// folded into the recorded config hash.
pub fn cmd_run(
    config_path: &Path,
    dry_run: bool,
    overrides: &RunOverrides,
) -> anyhow::Result<Outcome> {
    let mut loaded = LoadedConfig::load(config_path)?;
    overrides.apply(&mut loaded)?;
    let dataset = load_dataset(&loaded)?;
    let templates =
        load_templates(loaded.config.templates.as_ref(), &|p| loaded.resolve(p))?;
    if dry_run {
        return cmd_dry_run(&loaded, &dataset, &templates);
    }

    let output_dir = loaded.resolve(&loaded.config.run.output_dir);
    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;

    let mut metric_rows: Vec<(String, usize, metrics::MetricsReport)> = Vec::new();
    let mut cost_cells: Vec<(String, usize, cost::CostReport)> = Vec::new();
    let mut any_failures = false;

    for &strategy in &loaded.config.run.strategies {
        for &k in &loaded.config.run.k_shot {
            let dir = cell_dir(&output_dir, strategy, k);
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            let (client, _audit) = build_client(
                &loaded.config.backend,
                &|p| loaded.resolve(p),
                Some(&dataset),
                Some(&dir),
            )?;
            let run_config = cell_run_config(&loaded, strategy, k);
            let output = match strategies::run_experiment(&dataset, &run_config, &client, &templates)
            {
                Ok(output) => output,
                Err(RunError::Auth(msg)) => {
                    eprintln!("authentication failed: {msg}");
                    return Ok(Outcome::AuthError);
                }
                Err(other) => return Err(other.into()),
            };
            any_failures |= !output.failures.is_empty();

            let header = PredictionsHeader {
                schema: PREDICTIONS_SCHEMA.into(),
                dataset: dataset.name.clone(),
                strategy,
                k_shot: k,
                seed: run_config.seed,
                model: run_config.model.clone(),
                config_hash: loaded.config_hash.clone(),
                max_depth: dataset.taxonomy.max_depth(),
                few_shot_ids: output.few_shot_ids.clone(),
                n_failed: output.failures.len() as u64,
            };
            let golds: BTreeMap<&str, &LabeledDocument> =
                dataset.test.iter().map(|d| (d.doc_id.as_str(), d)).collect();
            artifacts::write_predictions(&dir.join("predictions.jsonl"), &header, &output, &|id| {
                golds.get(id).map(|d| d.gold_names.clone())
            })?;
            artifacts::write_json(
                &dir.join("metrics.json"),
                &MetricsArtifact {
                    schema: "metrics/v1".into(),
                    dataset: dataset.name.clone(),
                    strategy,
                    k_shot: k,
                    seed: run_config.seed,
                    config_hash: loaded.config_hash.clone(),
                    report: output.metrics.clone(),
                },
            )?;
            artifacts::write_json(
                &dir.join("cost.json"),
                &CostArtifact {
                    schema: "cost/v1".into(),
                    dataset: dataset.name.clone(),
                    strategy,
                    k_shot: k,
                    seed: run_config.seed,
                    config_hash: loaded.config_hash.clone(),
                    report: output.cost.clone(),
                },
            )?;
            metric_rows.push((strategy.as_str().to_string(), k, output.metrics));
            cost_cells.push((strategy.as_str().to_string(), k, output.cost));
        }
    }

    let rows: Vec<(String, usize, &metrics::MetricsReport)> =
        metric_rows.iter().map(|(s, k, r)| (s.clone(), *k, r)).collect();
    println!("== accuracy ({}) ==", dataset.name);
    print!("{}", render_metrics_table(&rows));
    let cells: Vec<(String, usize, &cost::CostReport)> =
        cost_cells.iter().map(|(s, k, r)| (s.clone(), *k, r)).collect();
    println!("\n== token usage ({}) ==", dataset.name);
    print!("{}", cost::render_cost_table(&cells));
    println!("\nartifacts under {}", output_dir.display());

    Ok(if any_failures { Outcome::PartialFailures } else { Outcome::Ok })
}

/// `run --dry-run`: render and count prompts, zero requests.
fn cmd_dry_run(
    loaded: &LoadedConfig,
    dataset: &Dataset,
    templates: &PromptTemplates,
) -> anyhow::Result<Outcome> {
    let max_depth = dataset.taxonomy.max_depth() as usize;
    println!(
        "dry run: dataset {} ({} train / {} test, depth {max_depth})",
        dataset.name,
        dataset.train.len(),
        dataset.test.len(),
    );
    for &strategy in &loaded.config.run.strategies {
        for &k in &loaded.config.run.k_shot {
            let few_shot = dataset.sample_few_shot(k, loaded.config.run.seed)?;
            let planned = match strategy {
                Strategy::Dl | Strategy::Dh => dataset.test.len(),
                Strategy::Tmh => dataset.test.len() * max_depth,
            };
            let mut rendered = 0usize;
            let mut prompt_tokens = 0u64;
            for doc in &dataset.test {
                let prompt = match strategy {
                    Strategy::Dl => render_dl(&dataset.taxonomy, templates, &few_shot, &doc.text)?,
                    Strategy::Dh => render_dh(&dataset.taxonomy, templates, &few_shot, &doc.text)?,
                    // Steps past depth 1 depend on responses; render the
                    // depth-1 prompt and count the rest as planned only.
                    Strategy::Tmh => {
                        render_tmh_step(&dataset.taxonomy, templates, None, &few_shot, &doc.text, 1)?
                    }
                };
                rendered += 1;
                prompt_tokens += estimate_tokens(&prompt.text);
            }
            println!(
                "{} k={k}: {planned} requests planned, {rendered} prompts rendered, \
                 ~{prompt_tokens} estimated prompt tokens{}",
                strategy.as_str(),
                if strategy == Strategy::Tmh { " (depth-1 steps only)" } else { "" },
            );
        }
    }
    println!("no requests were issued");
    Ok(Outcome::Ok)
}

/// `score`: recompute metrics from stored raw completions.
pub fn cmd_score(
    config_path: &Path,
    predictions_path: &Path,
    out: Option<&Path>,
) -> anyhow::Result<Outcome> {
    let loaded = LoadedConfig::load(config_path)?;
    let dataset = load_dataset(&loaded)?;
    let file = artifacts::read_predictions(predictions_path)?;
    let taxonomy = &dataset.taxonomy;

    let mut rescored: Vec<Prediction> = Vec::new();
    let mut golds: Vec<LabeledDocument> = Vec::new();
    for record in &file.records {
        let mut prediction = record.prediction.clone();
        let (predicted, resolution) = match file.header.strategy {
            Strategy::Dl => {
                let raw = prediction
                    .raw_outputs
                    .first()
                    .ok_or_else(|| anyhow!("record {} has no raw output", prediction.doc_id))?;
                resolve_dl_completion(taxonomy, &raw.text)
            }
            Strategy::Dh => {
                let raw = prediction
                    .raw_outputs
                    .first()
                    .ok_or_else(|| anyhow!("record {} has no raw output", prediction.doc_id))?;
                resolve_dh_completion(taxonomy, &raw.text)
            }
            Strategy::Tmh => {
                let steps: Vec<(u32, String)> = prediction
                    .raw_outputs
                    .iter()
                    .map(|r| (r.depth.unwrap_or(1), r.text.clone()))
                    .collect();
                resolve_tmh_completions(taxonomy, &steps)
            }
        };
        prediction.predicted = predicted;
        prediction.resolution = resolution;
        let gold = taxonomy.lookup_path(&record.gold).ok_or_else(|| {
            anyhow!(
                "gold path {:?} of {} is not in the configured dataset's taxonomy",
                record.gold,
                prediction.doc_id
            )
        })?;
        golds.push(LabeledDocument {
            doc_id: prediction.doc_id.clone(),
            text: String::new(),
            gold_names: record.gold.clone(),
            gold,
        });
        rescored.push(prediction);
    }

    let report =
        metrics::score(&rescored, &golds, taxonomy, file.failures.len() as u64)?;
    let label = file.header.strategy.as_str().to_string();
    print!("{}", render_metrics_table(&[(label, file.header.k_shot, &report)]));
    if let Some(out) = out {
        artifacts::write_json(
            out,
            &MetricsArtifact {
                schema: "metrics/v1".into(),
                dataset: file.header.dataset.clone(),
                strategy: file.header.strategy,
                k_shot: file.header.k_shot,
                seed: file.header.seed,
                config_hash: file.header.config_hash.clone(),
                report: report.clone(),
            },
        )?;
        println!("wrote {}", out.display());
    }
    Ok(Outcome::Ok)
}

/// `cost-report`: aggregate stored usage and price it.
pub fn cmd_cost_report(
    predictions_path: &Path,
    prices: Option<PriceTable>,
    out: Option<&Path>,
) -> anyhow::Result<Outcome> {
    let file = artifacts::read_predictions(predictions_path)?;
    let predictions: Vec<Prediction> =
        file.records.iter().map(|r| r.prediction.clone()).collect();
    let mut report = cost::aggregate(&predictions);
    if let Some(prices) = &prices {
        report = report.priced(prices).map_err(|e| anyhow!(e.to_string()))?;
    }
    let label = file.header.strategy.as_str().to_string();
    print!("{}", cost::render_cost_table(&[(label, file.header.k_shot, &report)]));
    if let Some(cost) = &report.estimated_cost {
        println!(
            "estimated cost: {cost} {}",
            report.currency.as_deref().unwrap_or("USD")
        );
    }
    if let Some(out) = out {
        artifacts::write_json(
            out,
            &CostArtifact {
                schema: "cost/v1".into(),
                dataset: file.header.dataset.clone(),
                strategy: file.header.strategy,
                k_shot: file.header.k_shot,
                seed: file.header.seed,
                config_hash: file.header.config_hash.clone(),
                report: report.clone(),
            },
        )?;
        println!("wrote {}", out.display());
    }
    Ok(Outcome::Ok)
}

/// `contamination-check`: run the probe battery and write the report.
pub fn cmd_contamination(spec_path: &Path) -> anyhow::Result<Outcome> {
    let loaded = LoadedContaminationSpec::load(spec_path)?;
    let templates =
        load_templates(loaded.spec.templates.as_ref(), &|p| loaded.resolve(p))?;
    let rules = loaded.rules()?;

    let mut references = BTreeMap::new();
    for (name, reference) in &loaded.spec.references {
        let schema = htc_core::CsvSchema {
            text_column: reference.text_column.clone(),
            label_columns: reference.label_columns.clone(),
        };
        let dataset = Dataset::load_csv(loaded.resolve(&reference.csv), name, &schema)?;
        references.insert(name.clone(), ContaminationReference::from_dataset(&dataset, &schema));
    }

    let output = loaded.resolve(&loaded.spec.output);
    let audit_dir = output.parent().map(Path::to_path_buf);
    let (client, _audit) = build_client(
        &loaded.spec.backend,
        &|p| loaded.resolve(p),
        None,
        audit_dir.as_deref(),
    )?;
    let outcomes = contamination::battery(
        &loaded.spec.probes,
        &loaded.spec.model,
        &client,
        &templates,
        &references,
        &rules,
    );

    let mut any_failed = false;
    let mut any_auth = false;
    for outcome in &outcomes {
        match outcome {
            contamination::ProbeOutcome::Verdict(v) => {
                println!(
                    "{} {} {} -> {:?}{}",
                    v.dataset_name,
                    v.split.as_deref().unwrap_or("-"),
                    v.format,
                    v.verdict,
                    if v.evidence.is_empty() {
                        String::new()
                    } else {
                        format!(" ({})", v.evidence)
                    }
                );
            }
            contamination::ProbeOutcome::Failed { dataset_name, error, .. } => {
                any_failed = true;
                any_auth |= error.contains("authentication");
                println!("{dataset_name} -> probe failed: {error}");
            }
        }
    }
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    artifacts::write_json(
        &output,
        &serde_json::json!({
            "schema": "contamination/v1",
            "config_hash": loaded.config_hash,
            "model": loaded.spec.model,
            "results": outcomes,
        }),
    )?;
    println!("wrote {}", output.display());
    Ok(if any_auth {
        Outcome::AuthError
    } else if any_failed {
        Outcome::PartialFailures
    } else {
        Outcome::Ok
    })
}

/// `render`: print one prompt to stdout without any request.
#[allow(clippy::too_many_arguments)]
pub fn cmd_render(
    config_path: &Path,
    strategy: Strategy,
    k: usize,
    text: Option<&str>,
    doc_index: Option<usize>,
    depth: u32,
    parent: Option<&str>,
) -> anyhow::Result<Outcome> {
    let loaded = LoadedConfig::load(config_path)?;
    let dataset = load_dataset(&loaded)?;
    let templates =
        load_templates(loaded.config.templates.as_ref(), &|p| loaded.resolve(p))?;
    let few_shot = dataset.sample_few_shot(k, loaded.config.run.seed)?;
    let input_text = match (text, doc_index) {
        (Some(t), _) => t.to_string(),
        (None, Some(i)) => dataset
            .test
            .get(i)
            .ok_or_else(|| anyhow!("test split has no document {i}"))?
            .text
            .clone(),
        (None, None) => "{input data}".to_string(),
    };
    let prompt = match strategy {
        Strategy::Dl => render_dl(&dataset.taxonomy, &templates, &few_shot, &input_text)?,
        Strategy::Dh => render_dh(&dataset.taxonomy, &templates, &few_shot, &input_text)?,
        Strategy::Tmh => {
            let parent_id = match parent {
                None => None,
                Some(path) => {
                    let names: Vec<&str> = path.split(" > ").collect();
                    let found = dataset.taxonomy.lookup_path(&names).ok_or_else(|| {
                        anyhow!("--parent {path:?} is not a path in the taxonomy")
                    })?;
                    found.leaf()
                }
            };
            render_tmh_step(&dataset.taxonomy, &templates, parent_id, &few_shot, &input_text, depth)?
        }
    };
    println!("{}", prompt.text);
    Ok(Outcome::Ok)
}

/// Classify errors for the documented exit codes.
pub fn outcome_of(err: &anyhow::Error) -> Outcome {
    for cause in err.chain() {
        if let Some(client) = cause.downcast_ref::<htc_core::client::ClientError>() {
            if matches!(client, htc_core::client::ClientError::Auth(_)) {
                return Outcome::AuthError;
            }
        }
        if let Some(run) = cause.downcast_ref::<RunError>() {
            if matches!(run, RunError::Auth(_)) {
                return Outcome::AuthError;
            }
        }
    }
    Outcome::ConfigError
}
