//! Per-depth accuracy and parent-conditional child accuracy.
//!
//! A document counts as correct through depth d iff its predicted and
//! gold labels match at *all* depths 1..d after text normalization on
//! both sides, so the count identity
//! `correct_through(d+1) = conditional_numerator(d)` holds exactly and
//! `ACC_{d+1} = ACC_d * P(d+1|d)` is an arithmetic consequence.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDocument;
use crate::normalize::normalize_text;
use crate::strategies::Prediction;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction {doc_id:?} has no matching gold document")]
    AlignmentMismatch { doc_id: String },
    #[error("reports have different depth structure: {a} vs {b}")]
    DepthMismatch { a: u32, b: u32 },
}

/// Accuracy through one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAccuracy {
    pub depth: u32,
    /// Documents correct at every depth 1..=depth.
    pub correct_through: u64,
    /// `correct_through / n_scored`; 0.0 when nothing was scored.
    pub accuracy: f64,
    /// Headline under the stricter convention that counts failed
    /// documents as wrong: `correct_through / (n_scored + n_failed)`.
    pub accuracy_counting_failures: f64,
}

/// `P(p_{d+1} correct | p_d correct)` with its exact counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalAccuracy {
    pub parent_depth: u32,
    pub numerator: u64,
    pub denominator: u64,
    /// Absent (not zero) when no document was correct through the
    /// parent depth.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub max_depth: u32,
    pub n_scored: u64,
    pub n_failed: u64,
    pub per_depth: Vec<DepthAccuracy>,
    pub conditionals: Vec<ConditionalAccuracy>,
}

impl MetricsReport {
    pub fn accuracy_at(&self, depth: u32) -> Option<f64> {
        self.per_depth.iter().find(|d| d.depth == depth).map(|d| d.accuracy)
    }

    pub fn conditional_at(&self, parent_depth: u32) -> Option<&ConditionalAccuracy> {
        self.conditionals.iter().find(|c| c.parent_depth == parent_depth)
    }

    /// Interleaved column labels: ACC_1, P(p_2|p_1), ACC_2, ...
    pub fn column_labels(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for d in 1..=self.max_depth {
            cols.push(format!("ACC_{d}"));
            if d < self.max_depth {
                cols.push(format!("P(p_{}|p_{})", d + 1, d));
            }
        }
        cols
    }

    /// Interleaved column values matching [`Self::column_labels`].
    pub fn column_values(&self) -> Vec<Option<f64>> {
        let mut vals = Vec::new();
        for d in 1..=self.max_depth {
            vals.push(self.accuracy_at(d));
            if d < self.max_depth {
                vals.push(self.conditional_at(d).and_then(|c| c.value));
            }
        }
        vals
    }
}

/// Number of leading depths at which the prediction matches gold after
/// normalization on both sides.
pub fn correct_prefix_depth(predicted: &[String], gold: &[String]) -> u32 {
    let mut depth = 0;
    for (p, g) in predicted.iter().zip(gold.iter()) {
        if normalize_text(p) == normalize_text(g) {
            depth += 1;
        } else {
            break;
        }
    }
    depth
}

/// Score predictions against their gold documents, aligned by doc id.
///
/// `n_failed` is the number of documents that produced no prediction;
/// they are excluded from accuracy denominators and reported alongside.
pub fn score(
    preds: &[Prediction],
    golds: &[LabeledDocument],
    taxonomy: &Taxonomy,
    n_failed: u64,
) -> Result<MetricsReport, MetricsError> {
    let gold_by_id: HashMap<&str, &LabeledDocument> =
        golds.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let max_depth = taxonomy.max_depth();
    let n_scored = preds.len() as u64;

    let mut correct_through = vec![0u64; max_depth as usize];
    for pred in preds {
        let gold = gold_by_id
            .get(pred.doc_id.as_str())
            .ok_or_else(|| MetricsError::AlignmentMismatch { doc_id: pred.doc_id.clone() })?;
        let prefix = correct_prefix_depth(&pred.predicted, &gold.gold_names);
        for d in 1..=prefix.min(max_depth) {
            correct_through[d as usize - 1] += 1;
        }
    }

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_depth = (1..=max_depth)
        .map(|d| {
            let correct = correct_through[d as usize - 1];
            DepthAccuracy {
                depth: d,
                correct_through: correct,
                accuracy: ratio(correct, n_scored),
                accuracy_counting_failures: ratio(correct, n_scored + n_failed),
            }
        })
        .collect();
    let conditionals = (1..max_depth)
        .map(|d| {
            let numerator = correct_through[d as usize];
            let denominator = correct_through[d as usize - 1];
            ConditionalAccuracy {
                parent_depth: d,
                numerator,
                denominator,
                value: (denominator > 0).then(|| numerator as f64 / denominator as f64),
            }
        })
        .collect();
    Ok(MetricsReport { max_depth, n_scored, n_failed, per_depth, conditionals })
}

/// Per-column difference between two reports of the same depth.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDiff {
    pub columns: Vec<String>,
    pub a: Vec<Option<f64>>,
    pub b: Vec<Option<f64>>,
    /// `a - b`; absent when either side is undefined.
    pub delta: Vec<Option<f64>>,
}

pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> Result<ReportDiff, MetricsError> {
    if a.max_depth != b.max_depth {
        return Err(MetricsError::DepthMismatch { a: a.max_depth, b: b.max_depth });
    }
    let columns = a.column_labels();
    let av = a.column_values();
    let bv = b.column_values();
    let delta = av
        .iter()
        .zip(bv.iter())
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        })
        .collect();
    Ok(ReportDiff { columns, a: av, b: bv, delta })
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".to_string(),
    }
}

impl ReportDiff {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.columns.iter().map(|c| c.len()).max().unwrap_or(8).max(8);
        out.push_str(&format!("{:<10}", ""));
        for c in &self.columns {
            out.push_str(&format!("{c:>width$}  "));
        }
        out.push('\n');
        for (label, row) in [("a", &self.a), ("b", &self.b), ("delta", &self.delta)] {
            out.push_str(&format!("{label:<10}"));
            for v in row {
                out.push_str(&format!("{:>width$}  ", fmt_cell(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Render labeled reports as an aligned table with one row per report,
/// mirroring the usual strategy × few-shot result layout.
pub fn render_metrics_table(rows: &[(String, usize, &MetricsReport)]) -> String {
    let Some((_, _, first)) = rows.first() else {
        return String::new();
    };
    let columns = first.column_labels();
    let width = columns.iter().map(|c| c.len()).max().unwrap_or(8).max(8);
    let mut out = String::new();
    out.push_str(&format!("{:<10}{:>12}  ", "Method", "#(Few Shot)"));
    for c in &columns {
        out.push_str(&format!("{c:>width$}  "));
    }
    out.push_str(&format!("{:>9}  {:>9}\n", "n_scored", "n_failed"));
    for (label, k, report) in rows {
        out.push_str(&format!("{label:<10}{k:>12}  "));
        for v in report.column_values() {
            out.push_str(&format!("{:>width$}  ", fmt_cell(v)));
        }
        out.push_str(&format!("{:>9}  {:>9}\n", report.n_scored, report.n_failed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::UsageProvenance;
    use crate::strategies::UsageTotals;

    fn taxonomy2() -> Taxonomy {
        Taxonomy::build([
            vec!["A", "a1"],
            vec!["A", "a2"],
            vec!["B", "b1"],
        ])
        .unwrap()
    }

    fn gold(id: &str, names: &[&str], t: &Taxonomy) -> LabeledDocument {
        LabeledDocument {
            doc_id: id.to_string(),
            text: format!("text {id}"),
            gold_names: names.iter().map(|s| s.to_string()).collect(),
            gold: t.lookup_path(names).unwrap(),
        }
    }

    fn pred(id: &str, names: &[&str]) -> Prediction {
        Prediction {
            doc_id: id.to_string(),
            predicted: names.iter().map(|s| s.to_string()).collect(),
            raw_outputs: Vec::new(),
            resolution: Vec::new(),
            usage: UsageTotals {
                prompt_tokens: 10,
                completion_tokens: 2,
                provenance: UsageProvenance::Estimated,
            },
            steps: 1,
            truncated_at: None,
        }
    }

    #[test]
    fn all_correct_oracle() {
        let t = taxonomy2();
        let golds =
            vec![gold("d0", &["A", "a1"], &t), gold("d1", &["B", "b1"], &t)];
        let preds = vec![pred("d0", &["A", "a1"]), pred("d1", &["B", "b1"])];
        let r = score(&preds, &golds, &t, 0).unwrap();
        assert_eq!(r.accuracy_at(1), Some(1.0));
        assert_eq!(r.accuracy_at(2), Some(1.0));
        assert_eq!(r.conditional_at(1).unwrap().value, Some(1.0));
    }

    #[test]
    fn reference_counts_round_to_three_decimals() {
        // 1000 scored, 677 correct at depth 1, 393 correct through both.
        let t = taxonomy2();
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        for i in 0..1000 {
            let id = format!("d{i}");
            golds.push(gold(&id, &["A", "a1"], &t));
            let predicted: &[&str] = if i < 393 {
                &["A", "a1"]
            } else if i < 677 {
                &["A", "a2"]
            } else {
                &["B", "b1"]
            };
            preds.push(pred(&id, predicted));
        }
        let r = score(&preds, &golds, &t, 0).unwrap();
        let round3 = |x: f64| (x * 1000.0).round() / 1000.0;
        assert_eq!(round3(r.accuracy_at(1).unwrap()), 0.677);
        assert_eq!(round3(r.conditional_at(1).unwrap().value.unwrap()), 0.581);
        assert_eq!(round3(r.accuracy_at(2).unwrap()), 0.393);
    }

    #[test]
    fn normalization_applies_to_both_sides() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t)];
        let preds = vec![pred("d0", &["a.", "A1!"])];
        let r = score(&preds, &golds, &t, 0).unwrap();
        assert_eq!(r.accuracy_at(2), Some(1.0));
    }

    #[test]
    fn short_prediction_wrong_at_missing_depths() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t)];
        let preds = vec![pred("d0", &["A"])];
        let r = score(&preds, &golds, &t, 0).unwrap();
        assert_eq!(r.accuracy_at(1), Some(1.0));
        assert_eq!(r.accuracy_at(2), Some(0.0));
    }

    #[test]
    fn undefined_conditional_is_absent() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t)];
        let preds = vec![pred("d0", &["B", "b1"])];
        let r = score(&preds, &golds, &t, 0).unwrap();
        assert_eq!(r.conditional_at(1).unwrap().value, None);
        assert_eq!(r.conditional_at(1).unwrap().denominator, 0);
    }

    #[test]
    fn alignment_mismatch_detected() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t)];
        let preds = vec![pred("other", &["A", "a1"])];
        assert!(matches!(
            score(&preds, &golds, &t, 0),
            Err(MetricsError::AlignmentMismatch { .. })
        ));
    }

    #[test]
    fn failures_tracked_in_both_conventions() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t), gold("d1", &["A", "a1"], &t)];
        let preds = vec![pred("d0", &["A", "a1"])];
        let r = score(&preds, &golds, &t, 1).unwrap();
        assert_eq!(r.n_scored, 1);
        assert_eq!(r.n_failed, 1);
        assert_eq!(r.per_depth[0].accuracy, 1.0);
        assert_eq!(r.per_depth[0].accuracy_counting_failures, 0.5);
    }

    #[test]
    fn multiplicative_identity_in_counts() {
        let t = taxonomy2();
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        // Mixed bag exercising every correctness pattern.
        let patterns: [(&[&str], &[&str]); 4] = [
            (&["A", "a1"], &["A", "a1"]),
            (&["A", "a1"], &["A", "a2"]),
            (&["A", "a1"], &["B", "b1"]),
            (&["B", "b1"], &["B", "b1"]),
        ];
        for (i, (g, p)) in patterns.iter().cycle().take(17).enumerate() {
            let id = format!("d{i}");
            golds.push(gold(&id, g, &t));
            preds.push(pred(&id, p));
        }
        let r = score(&preds, &golds, &t, 0).unwrap();
        let c = r.conditional_at(1).unwrap();
        assert_eq!(c.numerator, r.per_depth[1].correct_through);
        assert_eq!(c.denominator, r.per_depth[0].correct_through);
        // Monotone through depth.
        assert!(r.per_depth[0].correct_through >= r.per_depth[1].correct_through);
    }

    #[test]
    fn compare_reports_columns() {
        let t = taxonomy2();
        let golds = vec![gold("d0", &["A", "a1"], &t)];
        let preds = vec![pred("d0", &["A", "a1"])];
        let r = score(&preds, &golds, &t, 0).unwrap();
        let diff = compare_reports(&r, &r).unwrap();
        assert_eq!(diff.columns, vec!["ACC_1", "P(p_2|p_1)", "ACC_2"]);
        assert!(diff.delta.iter().all(|d| *d == Some(0.0)));

        let t3 = Taxonomy::build([vec!["x", "y", "z"]]).unwrap();
        let golds3 = vec![gold("d0", &["x", "y", "z"], &t3)];
        let preds3 = vec![pred("d0", &["x", "y", "z"])];
        let r3 = score(&preds3, &golds3, &t3, 0).unwrap();
        assert_eq!(r3.column_labels().len(), 5);
        assert!(matches!(
            compare_reports(&r, &r3),
            Err(MetricsError::DepthMismatch { .. })
        ));
    }

    #[test]
    fn table_renders_three_decimals() {
        let t = taxonomy2();
        let golds: Vec<LabeledDocument> =
            (0..3).map(|i| gold(&format!("d{i}"), &["A", "a1"], &t)).collect();
        let preds = vec![
            pred("d0", &["A", "a1"]),
            pred("d1", &["A", "a2"]),
            pred("d2", &["B", "b1"]),
        ];
        let r = score(&preds, &golds, &t, 0).unwrap();
        let table = render_metrics_table(&[("DL".to_string(), 0, &r)]);
        assert!(table.contains("0.667"), "{table}");
        assert!(table.contains("ACC_2"));
    }
}
