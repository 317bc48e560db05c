//! Output artifacts: predictions JSONL (versioned header line + one
//! record per document), metrics JSON and cost JSON. Serialization is
//! deterministic so identical runs produce byte-identical files.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use htc_core::cost::CostReport;
use htc_core::metrics::MetricsReport;
use htc_core::strategies::{Prediction, RunOutput};
use htc_core::Strategy;

pub const PREDICTIONS_SCHEMA: &str = "predictions/v1";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema mismatch in {path} line {line}: {message}")]
    SchemaMismatch { path: String, line: usize, message: String },
}

/// First line of a predictions file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionsHeader {
    pub schema: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub k_shot: usize,
    pub seed: u64,
    pub model: String,
    pub config_hash: String,
    pub max_depth: u32,
    pub few_shot_ids: Vec<String>,
    pub n_failed: u64,
}

/// One scored document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub gold: Vec<String>,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// One failed document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub doc_id: String,
    pub failed: bool,
    pub error: String,
}

#[derive(Debug)]
pub struct PredictionsFile {
    pub header: PredictionsHeader,
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<FailureRecord>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.display().to_string(), source }
}

/// Write the predictions JSONL for one run cell.
pub fn write_predictions(
    path: &Path,
    header: &PredictionsHeader,
    output: &RunOutput,
    golds: &dyn Fn(&str) -> Option<Vec<String>>,
) -> Result<(), ArtifactError> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut line = serde_json::to_vec(header).expect("header serializes");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))?;
    for prediction in &output.predictions {
        let record = PredictionRecord {
            gold: golds(&prediction.doc_id).unwrap_or_default(),
            prediction: prediction.clone(),
        };
        let mut line = serde_json::to_vec(&record).expect("records serialize");
        line.push(b'\n');
        file.write_all(&line).map_err(io_err(path))?;
    }
    for failure in &output.failures {
        let record = FailureRecord {
            doc_id: failure.doc_id.clone(),
            failed: true,
            error: failure.error.clone(),
        };
        let mut line = serde_json::to_vec(&record).expect("records serialize");
        line.push(b'\n');
        file.write_all(&line).map_err(io_err(path))?;
    }
    Ok(())
}

/// Read a predictions JSONL back, validating the schema line by line.
pub fn read_predictions(path: &Path) -> Result<PredictionsFile, ArtifactError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| ArtifactError::SchemaMismatch {
        path: path.display().to_string(),
        line: 1,
        message: "empty file, expected a header line".into(),
    })?;
    let first = first.map_err(io_err(path))?;
    let header: PredictionsHeader = serde_json::from_str(&first).map_err(|e| {
        ArtifactError::SchemaMismatch {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        }
    })?;
    if header.schema != PREDICTIONS_SCHEMA {
        return Err(ArtifactError::SchemaMismatch {
            path: path.display().to_string(),
            line: 1,
            message: format!("unsupported schema {:?}", header.schema),
        });
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| ArtifactError::SchemaMismatch {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if value.get("failed").and_then(|v| v.as_bool()).unwrap_or(false) {
            let failure: FailureRecord =
                serde_json::from_value(value).map_err(|e| ArtifactError::SchemaMismatch {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            failures.push(failure);
        } else {
            let record: PredictionRecord =
                serde_json::from_value(value).map_err(|e| ArtifactError::SchemaMismatch {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
    }
    Ok(PredictionsFile { header, records, failures })
}

/// Metrics artifact: the report plus run identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub schema: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub k_shot: usize,
    pub seed: u64,
    pub config_hash: String,
    pub report: MetricsReport,
}

/// Cost artifact: the report plus run identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostArtifact {
    pub schema: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub k_shot: usize,
    pub seed: u64,
    pub config_hash: String,
    pub report: CostReport,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use htc_core::client::UsageProvenance;
    use htc_core::cost;
    use htc_core::strategies::{DocFailure, UsageTotals};

    fn sample_output() -> RunOutput {
        let prediction = Prediction {
            doc_id: "d-0".into(),
            predicted: vec!["A".into(), "a1".into()],
            raw_outputs: vec![],
            resolution: vec![],
            usage: UsageTotals {
                prompt_tokens: 12,
                completion_tokens: 3,
                provenance: UsageProvenance::Estimated,
            },
            steps: 1,
            truncated_at: None,
        };
        let taxonomy = htc_core::Taxonomy::build([vec!["A", "a1"]]).unwrap();
        let gold_doc = htc_core::LabeledDocument {
            doc_id: "d-0".into(),
            text: "t".into(),
            gold_names: vec!["A".into(), "a1".into()],
            gold: taxonomy.lookup_path(&["A", "a1"]).unwrap(),
        };
        let metrics =
            htc_core::metrics::score(std::slice::from_ref(&prediction), &[gold_doc], &taxonomy, 1)
                .unwrap();
        let cost = cost::aggregate(std::slice::from_ref(&prediction));
        RunOutput {
            predictions: vec![prediction],
            failures: vec![DocFailure { doc_id: "d-1".into(), error: "timeout".into() }],
            metrics,
            cost,
            few_shot_ids: vec![],
        }
    }

    fn header() -> PredictionsHeader {
        PredictionsHeader {
            schema: PREDICTIONS_SCHEMA.into(),
            dataset: "tiny".into(),
            strategy: Strategy::Dl,
            k_shot: 0,
            seed: 7,
            model: "mock".into(),
            config_hash: "deadbeef".into(),
            max_depth: 2,
            few_shot_ids: vec![],
            n_failed: 1,
        }
    }

    #[test]
    fn round_trips_predictions_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.jsonl");
        let output = sample_output();
        write_predictions(&path, &header(), &output, &|id| {
            (id == "d-0").then(|| vec!["A".to_string(), "a1".to_string()])
        })
        .unwrap();
        let read = read_predictions(&path).unwrap();
        assert_eq!(read.header.strategy, Strategy::Dl);
        assert_eq!(read.records.len(), 1);
        assert_eq!(read.records[0].gold, vec!["A", "a1"]);
        assert_eq!(read.records[0].prediction, output.predictions[0]);
        assert_eq!(read.failures.len(), 1);
        assert_eq!(read.failures[0].doc_id, "d-1");
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.jsonl");
        let output = sample_output();
        write_predictions(&path, &header(), &output, &|_| None).unwrap();
        let mut contents = std::fs::read_to_string(&path).unwrap();
        contents.push_str("{\"doc_id\": \"d-9\", \"gold\"\n");
        std::fs::write(&path, contents).unwrap();
        match read_predictions(&path) {
            Err(ArtifactError::SchemaMismatch { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.jsonl");
        let mut h = header();
        h.schema = "predictions/v999".into();
        std::fs::write(&path, format!("{}\n", serde_json::to_string(&h).unwrap())).unwrap();
        match read_predictions(&path) {
            Err(ArtifactError::SchemaMismatch { line: 1, message, .. }) => {
                assert!(message.contains("v999"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn writes_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        let output = sample_output();
        let golds = |id: &str| (id == "d-0").then(|| vec!["A".to_string(), "a1".to_string()]);
        write_predictions(&p1, &header(), &output, &golds).unwrap();
        write_predictions(&p2, &header(), &output, &golds).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
