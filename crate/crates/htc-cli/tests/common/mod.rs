//! Shared fixtures for the integration and acceptance suites.

use std::path::{Path, PathBuf};

use htc_core::dataset::{Dataset, LabeledDocument};
use htc_core::taxonomy::Taxonomy;

/// Label paths for a forest shaped `[n1, n2, ...]` nodes per depth,
/// distributed round-robin so every internal node has children.
pub fn shaped_paths(shape: &[usize]) -> Vec<Vec<String>> {
    assert!(!shape.is_empty());
    let names: Vec<Vec<String>> = shape
        .iter()
        .enumerate()
        .map(|(d, n)| (0..*n).map(|i| format!("level{} node{}", d + 1, i)).collect())
        .collect();
    // parent index of node i at depth d (> 0): i % shape[d-1]
    let leaves = shape[shape.len() - 1];
    (0..leaves)
        .map(|leaf| {
            let mut idx = leaf;
            let mut rev = vec![names[shape.len() - 1][leaf].clone()];
            for d in (0..shape.len() - 1).rev() {
                idx %= shape[d];
                rev.push(names[d][idx].clone());
            }
            rev.reverse();
            rev
        })
        .collect()
}

/// In-memory dataset over the shaped forest: `n_train` and `n_test`
/// documents with gold paths cycling through the leaves.
#[allow(dead_code)] // each test target compiles its own view of this module
pub fn shaped_dataset(shape: &[usize], n_train: usize, n_test: usize) -> Dataset {
    let paths = shaped_paths(shape);
    let taxonomy = Taxonomy::build(&paths).unwrap();
    let mk = |prefix: &str, i: usize| {
        let names = &paths[i % paths.len()];
        LabeledDocument {
            doc_id: format!("{prefix}-{i}"),
            text: format!("{prefix} passage number {i} mentioning {}", names.join(" then ")),
            gold_names: names.clone(),
            gold: taxonomy.lookup_path(names).unwrap(),
        }
    };
    Dataset {
        name: "shaped".into(),
        train: (0..n_train).map(|i| mk("train", i)).collect(),
        test: (0..n_test).map(|i| mk("test", i)).collect(),
        taxonomy,
    }
}

/// Write a dataset CSV usable by the CLI config loader.
pub fn write_csv(path: &Path, docs: &[(String, Vec<String>)], depth: usize) {
    let mut out = String::from("text");
    for d in 1..=depth {
        out.push_str(&format!(",label{d}"));
    }
    out.push('\n');
    for (text, labels) in docs {
        assert!(!text.contains(','), "fixture texts stay comma-free");
        out.push_str(text);
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Lay out train/test CSVs for a shaped dataset and return a config
/// body targeting them with a mock-echo backend.
pub struct CliFixture {
    /// Owns the directory; dropping it deletes the fixture.
    #[allow(dead_code)]
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
}

pub fn cli_fixture(
    shape: &[usize],
    n_train: usize,
    n_test: usize,
    strategies: &str,
    k_shot: &str,
    backend_toml: &str,
) -> CliFixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = shaped_paths(shape);
    let depth = shape.len();
    let train: Vec<(String, Vec<String>)> = (0..n_train)
        .map(|i| (format!("train passage number {i}"), paths[i % paths.len()].clone()))
        .collect();
    let test: Vec<(String, Vec<String>)> = (0..n_test)
        .map(|i| (format!("test passage number {i}"), paths[i % paths.len()].clone()))
        .collect();
    write_csv(&dir.path().join("train.csv"), &train, depth);
    write_csv(&dir.path().join("test.csv"), &test, depth);

    let label_columns: Vec<String> = (1..=depth).map(|d| format!("\"label{d}\"")).collect();
    let config = format!(
        r#"[dataset]
name = "shaped"
train_csv = "train.csv"
test_csv = "test.csv"
text_column = "text"
label_columns = [{labels}]

[run]
strategies = [{strategies}]
k_shot = [{k_shot}]
seed = 7
concurrency = 2
output_dir = "out"

[model]
name = "mock-model"

[prices]
input_per_million = "0.15"
output_per_million = "0.60"

{backend_toml}
"#,
        labels = label_columns.join(", "),
    );
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, config).unwrap();
    let output_dir = dir.path().join("out");
    CliFixture { dir, config_path, output_dir }
}

/// Path of the compiled `htc` binary.
pub fn htc_bin() -> &'static str {
    env!("CARGO_BIN_EXE_htc")
}
