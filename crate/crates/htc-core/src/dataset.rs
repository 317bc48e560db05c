//! Labeled corpora: CSV ingestion, holdout splitting and seeded few-shot
//! sampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{LabelPath, Taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column {column:?} in {path}")]
    MissingColumn { column: String, path: String },
    #[error("empty cell in column {column:?} at rows {rows:?} of {path}")]
    EmptyLabelCell { column: String, rows: Vec<u64>, path: String },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("io error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("few-shot k={k} exceeds training set size {train}")]
    KTooLarge { k: usize, train: usize },
    #[error("holdout n_test={n_test} must be smaller than corpus size {total}")]
    NTooLarge { n_test: usize, total: usize },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Which CSV columns carry the text and the per-depth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub text_column: String,
    /// One column per depth, shallowest first.
    pub label_columns: Vec<String>,
}

/// One input passage with its gold label path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc_id: String,
    pub text: String,
    /// Gold label names, root first.
    pub gold_names: Vec<String>,
    /// Gold path resolved against the dataset taxonomy.
    pub gold: LabelPath,
}

/// An immutable corpus with its derived taxonomy.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<LabeledDocument>,
    pub test: Vec<LabeledDocument>,
    pub taxonomy: Taxonomy,
}

struct RawRow {
    row: u64,
    text: String,
    labels: Vec<String>,
}

fn read_rows(path: &Path, schema: &CsvSchema) -> Result<Vec<RawRow>, DatasetError> {
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(source) => DatasetError::Io { path: path_str.clone(), source },
                _ => unreachable!("is_io_error guarantees an Io kind"),
            }
        } else {
            DatasetError::Csv { path: path_str.clone(), source: e }
        }
    })?;
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Csv { path: path_str.clone(), source: e })?
        .clone();
    let col = |name: &str| -> Result<usize, DatasetError> {
        headers.iter().position(|h| h == name).ok_or_else(|| DatasetError::MissingColumn {
            column: name.to_string(),
            path: path_str.clone(),
        })
    };
    let text_idx = col(&schema.text_column)?;
    let label_idx: Vec<usize> =
        schema.label_columns.iter().map(|c| col(c)).collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut empty: Vec<(String, u64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| DatasetError::Csv { path: path_str.clone(), source: e })?;
        let row = i as u64;
        let text = record.get(text_idx).unwrap_or("").trim().to_string();
        if text.is_empty() {
            empty.push((schema.text_column.clone(), row));
        }
        let mut labels = Vec::with_capacity(label_idx.len());
        for (d, idx) in label_idx.iter().enumerate() {
            let v = record.get(*idx).unwrap_or("").trim().to_string();
            if v.is_empty() {
                empty.push((schema.label_columns[d].clone(), row));
            }
            labels.push(v);
        }
        rows.push(RawRow { row, text, labels });
    }
    if let Some((column, _)) = empty.first() {
        let column = column.clone();
        let rows: Vec<u64> =
            empty.iter().filter(|(c, _)| *c == column).map(|(_, r)| *r).collect();
        return Err(DatasetError::EmptyLabelCell { column, rows, path: path_str });
    }
    Ok(rows)
}

impl Dataset {
    /// Load a single CSV into the training split (use
    /// [`Dataset::into_holdout`] or a second file to carve out a test
    /// set). One document per row; the taxonomy is derived from the gold
    /// label columns.
    pub fn load_csv(
        path: impl AsRef<Path>,
        name: &str,
        schema: &CsvSchema,
    ) -> Result<Self, DatasetError> {
        let rows = read_rows(path.as_ref(), schema)?;
        let taxonomy = Taxonomy::build(rows.iter().map(|r| r.labels.clone()))?;
        let train = docs_from_rows(name, &rows, &taxonomy);
        Ok(Dataset { name: name.to_string(), train, test: Vec::new(), taxonomy })
    }

    /// Load separate train and test files sharing one schema. The
    /// taxonomy is the union of both files' gold paths.
    pub fn load_csv_pair(
        train_path: impl AsRef<Path>,
        test_path: impl AsRef<Path>,
        name: &str,
        schema: &CsvSchema,
    ) -> Result<Self, DatasetError> {
        let train_rows = read_rows(train_path.as_ref(), schema)?;
        let test_rows = read_rows(test_path.as_ref(), schema)?;
        let taxonomy = Taxonomy::build(
            train_rows.iter().chain(test_rows.iter()).map(|r| r.labels.clone()),
        )?;
        let train = docs_from_rows(&format!("{name}-train"), &train_rows, &taxonomy);
        let test = docs_from_rows(&format!("{name}-test"), &test_rows, &taxonomy);
        Ok(Dataset { name: name.to_string(), train, test, taxonomy })
    }

    /// Move a seeded random selection of `n_test` documents from train
    /// to test. Both splits keep their source-file order.
    pub fn into_holdout(mut self, n_test: usize, seed: u64) -> Result<Self, DatasetError> {
        let mut docs = std::mem::take(&mut self.train);
        docs.extend(std::mem::take(&mut self.test));
        let (train, test) = split_holdout(docs, n_test, seed)?;
        self.train = train;
        self.test = test;
        Ok(self)
    }

    /// Seeded uniform sample of `k` distinct training documents.
    ///
    /// Samples nest: for a fixed seed the k=n sample is a prefix of the
    /// k=m sample whenever n < m, so cost comparisons across k isolate
    /// prompt growth from example variance.
    pub fn sample_few_shot(&self, k: usize, seed: u64) -> Result<Vec<LabeledDocument>, DatasetError> {
        if k > self.train.len() {
            return Err(DatasetError::KTooLarge { k, train: self.train.len() });
        }
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        Ok(order[..k].iter().map(|&i| self.train[i].clone()).collect())
    }
}

fn docs_from_rows(prefix: &str, rows: &[RawRow], taxonomy: &Taxonomy) -> Vec<LabeledDocument> {
    rows.iter()
        .map(|r| {
            let gold = taxonomy
                .lookup_path(&r.labels)
                .expect("taxonomy was built from these exact paths");
            LabeledDocument {
                doc_id: format!("{prefix}-{}", r.row),
                text: r.text.clone(),
                gold_names: r.labels.clone(),
                gold,
            }
        })
        .collect()
}

/// Deterministic seeded partition into (train, test) with |test| =
/// `n_test`. Both halves preserve the input order.
pub fn split_holdout(
    docs: Vec<LabeledDocument>,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<LabeledDocument>, Vec<LabeledDocument>), DatasetError> {
    if n_test >= docs.len() {
        return Err(DatasetError::NTooLarge { n_test, total: docs.len() });
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut is_test = vec![false; docs.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut train = Vec::with_capacity(docs.len() - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (i, doc) in docs.into_iter().enumerate() {
        if is_test[i] {
            test.push(doc);
        } else {
            train.push(doc);
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn schema2() -> CsvSchema {
        CsvSchema {
            text_column: "text".into(),
            label_columns: vec!["domain".into(), "keyword".into()],
        }
    }

    #[test]
    fn loads_three_rows() {
        let f = write_csv("text,domain,keyword\nabout ml,CS,ML\nabout db,CS,DB\nskin,Med,Derm\n");
        let d = Dataset::load_csv(f.path(), "tiny", &schema2()).unwrap();
        assert_eq!(d.train.len(), 3);
        assert_eq!(d.taxonomy.max_depth(), 2);
        assert_eq!(d.train[0].doc_id, "tiny-0");
        assert_eq!(d.train[0].gold_names, vec!["CS", "ML"]);
    }

    #[test]
    fn three_label_columns_give_depth_three() {
        let f = write_csv("text,c1,c2,c3\nt,a,b,c\n");
        let schema = CsvSchema {
            text_column: "text".into(),
            label_columns: vec!["c1".into(), "c2".into(), "c3".into()],
        };
        let d = Dataset::load_csv(f.path(), "apr", &schema).unwrap();
        assert_eq!(d.taxonomy.max_depth(), 3);
    }

    #[test]
    fn missing_column_reported() {
        let f = write_csv("text,domain\nabout ml,CS\n");
        let err = Dataset::load_csv(f.path(), "tiny", &schema2()).unwrap_err();
        match err {
            DatasetError::MissingColumn { column, .. } => assert_eq!(column, "keyword"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn empty_cells_reported_with_rows() {
        let f = write_csv("text,domain,keyword\na,CS,ML\nb,CS,\nc,CS,\n");
        let err = Dataset::load_csv(f.path(), "tiny", &schema2()).unwrap_err();
        match err {
            DatasetError::EmptyLabelCell { column, rows, .. } => {
                assert_eq!(column, "keyword");
                assert_eq!(rows, vec![1, 2]);
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn loading_is_order_stable() {
        let f = write_csv("text,domain,keyword\na,CS,ML\nb,CS,DB\n");
        let d1 = Dataset::load_csv(f.path(), "tiny", &schema2()).unwrap();
        let d2 = Dataset::load_csv(f.path(), "tiny", &schema2()).unwrap();
        let ids1: Vec<&str> = d1.train.iter().map(|d| d.doc_id.as_str()).collect();
        let ids2: Vec<&str> = d2.train.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids1, ids2);
    }

    fn synthetic(n: usize) -> Dataset {
        let rows: String = (0..n)
            .map(|i| format!("doc {i},dom{},kw{i}\n", i % 3))
            .collect();
        let f = write_csv(&format!("text,domain,keyword\n{rows}"));
        Dataset::load_csv(f.path(), "syn", &schema2()).unwrap()
    }

    #[test]
    fn few_shot_zero_and_determinism() {
        let d = synthetic(10);
        assert!(d.sample_few_shot(0, 7).unwrap().is_empty());
        let a = d.sample_few_shot(5, 7).unwrap();
        let b = d.sample_few_shot(5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let ids: std::collections::HashSet<&str> =
            a.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids.len(), 5, "samples are distinct");
    }

    #[test]
    fn few_shot_grid_accepted_and_nested() {
        let d = synthetic(25);
        let grid = [0usize, 1, 3, 5, 10, 20];
        let full = d.sample_few_shot(20, 3).unwrap();
        for k in grid {
            let s = d.sample_few_shot(k, 3).unwrap();
            assert_eq!(s, full[..k].to_vec(), "k={k} sample is a prefix");
        }
    }

    #[test]
    fn few_shot_k_too_large() {
        let d = synthetic(4);
        assert!(matches!(
            d.sample_few_shot(5, 0),
            Err(DatasetError::KTooLarge { k: 5, train: 4 })
        ));
    }

    #[test]
    fn holdout_sizes_and_determinism() {
        let d = synthetic(10);
        let (train, test) = split_holdout(d.train.clone(), 3, 11).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        let (train2, test2) = split_holdout(d.train.clone(), 3, 11).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let train_ids: std::collections::HashSet<&str> =
            train.iter().map(|d| d.doc_id.as_str()).collect();
        assert!(test.iter().all(|d| !train_ids.contains(d.doc_id.as_str())));
    }

    #[test]
    fn holdout_at_corpus_scale() {
        // 1,250 train / 1,800 test out of a 3,050-document corpus.
        let d = synthetic(3050);
        let (train, test) = split_holdout(d.train, 1800, 13).unwrap();
        assert_eq!(train.len(), 1250);
        assert_eq!(test.len(), 1800);
    }

    #[test]
    fn holdout_rejects_oversized_test() {
        let d = synthetic(4);
        assert!(matches!(
            split_holdout(d.train, 4, 0),
            Err(DatasetError::NTooLarge { .. })
        ));
    }

    #[test]
    fn no_leakage_after_holdout() {
        let d = synthetic(30).into_holdout(10, 5).unwrap();
        let test_ids: std::collections::HashSet<&str> =
            d.test.iter().map(|x| x.doc_id.as_str()).collect();
        for k in [1, 5, 10] {
            for ex in d.sample_few_shot(k, 9).unwrap() {
                assert!(!test_ids.contains(ex.doc_id.as_str()));
            }
        }
    }
}
