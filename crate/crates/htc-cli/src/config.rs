//! Experiment configuration: TOML with `${VAR}` environment
//! interpolation in string values, unknown keys rejected, validated
//! before any network call.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use htc_core::contamination::{ContaminationRules, ProbeSpec};
use htc_core::cost::PriceTable;
use htc_core::dataset::CsvSchema;
use htc_core::Strategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("environment variable {0} referenced by config is not set")]
    MissingEnv(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Interpolate `${VAR}` in every string value of a TOML tree.
fn interpolate(value: &mut toml::Value) -> Result<(), ConfigError> {
    match value {
        toml::Value::String(s) => {
            if s.contains("${") {
                *s = expand_env(s)?;
            }
            Ok(())
        }
        toml::Value::Array(items) => items.iter_mut().try_for_each(interpolate),
        toml::Value::Table(table) => table.iter_mut().try_for_each(|(_, v)| interpolate(v)),
        _ => Ok(()),
    }
}

fn expand_env(s: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = &after[..end];
        let value =
            std::env::var(name).map_err(|_| ConfigError::MissingEnv(name.to_string()))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String), ConfigError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let table: toml::Table = raw
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let mut value = toml::Value::Table(table);
    interpolate(&mut value)?;
    let typed = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok((typed, raw))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// Pre-split pair...
    #[serde(default)]
    pub train_csv: Option<PathBuf>,
    #[serde(default)]
    pub test_csv: Option<PathBuf>,
    /// ...or a single file with a seeded holdout.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub split_seed: Option<u64>,
    pub text_column: String,
    pub label_columns: Vec<String>,
}

impl DatasetConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            text_column: self.text_column.clone(),
            label_columns: self.label_columns.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.csv, &self.train_csv, &self.test_csv) {
            (Some(_), None, None) => {
                if self.n_test.is_none() {
                    return Err(ConfigError::Invalid(
                        "dataset.csv requires dataset.n_test (and optionally split_seed)".into(),
                    ));
                }
                Ok(())
            }
            (None, Some(_), Some(_)) => Ok(()),
            _ => Err(ConfigError::Invalid(
                "dataset needs either csv + n_test or train_csv + test_csv".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategies: Vec<Strategy>,
    pub k_shot: Vec<usize>,
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub output_dir: PathBuf,
}

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default)]
    pub max_completion_tokens: Option<u32>,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_top_p() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKindConfig {
    Http,
    MockEcho,
    MockScripted,
}

impl BackendKindConfig {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKindConfig::Http => "http",
            BackendKindConfig::MockEcho => "mock-echo",
            BackendKindConfig::MockScripted => "mock-scripted",
        }
    }
}

impl std::str::FromStr for BackendKindConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKindConfig::Http),
            "mock-echo" => Ok(BackendKindConfig::MockEcho),
            "mock-scripted" => Ok(BackendKindConfig::MockScripted),
            other => Err(format!(
                "unknown backend kind {other:?} (expected http, mock-echo or mock-scripted)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionConfig {
    CaseFlip,
    AppendPunct { punct: char },
    Typo { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKindConfig,
    /// http: endpoint base, e.g. https://api.openai.com
    #[serde(default)]
    pub base_url: Option<String>,
    /// http: name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub timeout_seconds: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    /// mock-scripted: JSON file {"replies": {...}, "fallback": "...", "strict": bool}
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Optional corruption wrapper around any mock backend.
    #[serde(default)]
    pub perturb: Option<CorruptionConfig>,
    /// JSONL request audit log path.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

impl BackendSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            BackendKindConfig::Http => {
                if self.base_url.is_none() {
                    return Err(ConfigError::Invalid("backend.kind = http needs base_url".into()));
                }
                Ok(())
            }
            BackendKindConfig::MockScripted => {
                if self.script.is_none() {
                    return Err(ConfigError::Invalid(
                        "backend.kind = mock-scripted needs script".into(),
                    ));
                }
                Ok(())
            }
            BackendKindConfig::MockEcho => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    #[serde(default)]
    pub leaf: Option<PathBuf>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub probe: Option<PathBuf>,
    #[serde(default)]
    pub probe_split: Option<PathBuf>,
}

/// Top-level experiment configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub run: RunSection,
    pub model: ModelSection,
    #[serde(default)]
    pub prices: Option<PriceTable>,
    pub backend: BackendSection,
    #[serde(default)]
    pub templates: Option<TemplatesSection>,
}

/// A loaded config plus the hash of its raw bytes, recorded in every
/// output artifact.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub config_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let (config, raw) = load_toml::<ExperimentConfig>(path)?;
        config.dataset.validate()?;
        config.backend.validate()?;
        if config.run.strategies.is_empty() || config.run.k_shot.is_empty() {
            return Err(ConfigError::Invalid(
                "run.strategies and run.k_shot must be non-empty".into(),
            ));
        }
        Ok(LoadedConfig {
            config,
            config_hash: sha256_hex(raw.as_bytes()),
            config_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub csv: PathBuf,
    pub text_column: String,
    pub label_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesSection {
    #[serde(default = "default_overlap")]
    pub min_overlap_chars: usize,
    #[serde(default = "default_attr_matches")]
    pub min_attribute_matches: usize,
    #[serde(default)]
    pub refusal_patterns_file: Option<PathBuf>,
}

fn default_overlap() -> usize {
    40
}

fn default_attr_matches() -> usize {
    2
}

impl Default for RulesSection {
    fn default() -> Self {
        RulesSection {
            min_overlap_chars: default_overlap(),
            min_attribute_matches: default_attr_matches(),
            refusal_patterns_file: None,
        }
    }
}

/// Contamination-check specification file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub model: String,
    pub output: PathBuf,
    pub backend: BackendSection,
    #[serde(default)]
    pub rules: RulesSection,
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub references: BTreeMap<String, ReferenceConfig>,
    #[serde(default)]
    pub templates: Option<TemplatesSection>,
}

#[derive(Debug, Clone)]
pub struct LoadedContaminationSpec {
    pub spec: ContaminationSpec,
    pub config_hash: String,
    pub config_dir: PathBuf,
}

impl LoadedContaminationSpec {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let (spec, raw) = load_toml::<ContaminationSpec>(path)?;
        spec.backend.validate()?;
        Ok(LoadedContaminationSpec {
            spec,
            config_hash: sha256_hex(raw.as_bytes()),
            config_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    pub fn rules(&self) -> Result<ContaminationRules, ConfigError> {
        let mut rules = ContaminationRules {
            min_overlap_chars: self.spec.rules.min_overlap_chars,
            min_attribute_matches: self.spec.rules.min_attribute_matches,
            ..ContaminationRules::default()
        };
        if let Some(file) = &self.spec.rules.refusal_patterns_file {
            let path = self.resolve(file);
            rules = rules.with_refusal_file(&path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(rules)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    const MINIMAL: &str = r#"
[dataset]
name = "tiny"
train_csv = "train.csv"
test_csv = "test.csv"
text_column = "text"
label_columns = ["domain", "keyword"]

[run]
strategies = ["DL"]
k_shot = [0]
seed = 7
output_dir = "out"

[model]
name = "mock-model"

[backend]
kind = "mock-echo"
"#;

    #[test]
    fn loads_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), MINIMAL);
        let loaded = LoadedConfig::load(&path).unwrap();
        assert_eq!(loaded.config.dataset.name, "tiny");
        assert_eq!(loaded.config.model.temperature, 1.0);
        assert_eq!(loaded.config_hash.len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = MINIMAL.replace("[backend]", "definitely_unknown = 1\n[backend]");
        let path = write_config(dir.path(), &body);
        match LoadedConfig::load(&path) {
            Err(ConfigError::Parse { message, .. }) => {
                assert!(message.contains("definitely_unknown"), "{message}");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn env_interpolation() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("HTC_TEST_MODEL_NAME", "interp-model");
        let body = MINIMAL.replace("name = \"mock-model\"", "name = \"${HTC_TEST_MODEL_NAME}\"");
        let path = write_config(dir.path(), &body);
        let loaded = LoadedConfig::load(&path).unwrap();
        assert_eq!(loaded.config.model.name, "interp-model");
    }

    #[test]
    fn missing_env_reported() {
        let dir = tempfile::tempdir().unwrap();
        let body =
            MINIMAL.replace("name = \"mock-model\"", "name = \"${HTC_TEST_NOT_SET_ANYWHERE}\"");
        let path = write_config(dir.path(), &body);
        assert!(matches!(LoadedConfig::load(&path), Err(ConfigError::MissingEnv(_))));
    }

    #[test]
    fn http_backend_needs_base_url() {
        let dir = tempfile::tempdir().unwrap();
        let body = MINIMAL.replace("kind = \"mock-echo\"", "kind = \"http\"");
        let path = write_config(dir.path(), &body);
        assert!(matches!(LoadedConfig::load(&path), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn single_csv_needs_n_test() {
        let dir = tempfile::tempdir().unwrap();
        let body = MINIMAL
            .replace("train_csv = \"train.csv\"\ntest_csv = \"test.csv\"", "csv = \"all.csv\"");
        let path = write_config(dir.path(), &body);
        assert!(matches!(LoadedConfig::load(&path), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_file_bytes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = write_config(d1.path(), MINIMAL);
        let h1 = LoadedConfig::load(&p1).unwrap().config_hash;
        let p2 = write_config(d2.path(), &format!("{MINIMAL}\n# comment\n"));
        let h2 = LoadedConfig::load(&p2).unwrap().config_hash;
        assert_ne!(h1, h2);
        let h1_again = LoadedConfig::load(&p1).unwrap().config_hash;
        assert_eq!(h1, h1_again);
    }

    #[test]
    fn contamination_spec_loads() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"
model = "mock-model"
output = "report.json"

[backend]
kind = "mock-scripted"
script = "script.json"

[[probes]]
dataset_name = "Web of Science"
format = ".xlsx"

[[probes]]
dataset_name = "Web of Science"
format = ".csv"
"#;
        let path = dir.path().join("spec.toml");
        std::fs::write(&path, body).unwrap();
        let loaded = LoadedContaminationSpec::load(&path).unwrap();
        assert_eq!(loaded.spec.probes.len(), 2);
        assert_eq!(loaded.spec.rules.min_overlap_chars, 40);
    }
}
