//! Token usage aggregation and currency estimates.
//!
//! Currency math uses exact decimal arithmetic; token counts stay
//! integral until the final averaging.

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::UsageProvenance;
use crate::strategies::Prediction;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("negative price: {0}")]
    NegativePrice(Decimal),
}

/// Prices per million tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    pub input_per_million: Decimal,
    pub output_per_million: Decimal,
    #[serde(default = "default_currency")]
    pub currency: String,
}

fn default_currency() -> String {
    "USD".to_string()
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable {
            input_per_million: Decimal::ZERO,
            output_per_million: Decimal::ZERO,
            currency: default_currency(),
        }
    }
}

/// Per-run token usage and estimated spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_documents: u64,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
    /// Totals divided by document count; multi-step strategies sum all
    /// per-depth requests into one per-document figure first.
    pub avg_prompt_tokens: f64,
    pub avg_completion_tokens: f64,
    pub usage_provenance: UsageProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_cost: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currency: Option<String>,
}

impl CostReport {
    /// Attach an exact-decimal cost estimate.
    pub fn priced(mut self, prices: &PriceTable) -> Result<Self, CostError> {
        self.estimated_cost = Some(estimate_cost(&self, prices)?);
        self.currency = Some(prices.currency.clone());
        Ok(self)
    }
}

/// Sum and average token usage across documents.
pub fn aggregate(preds: &[Prediction]) -> CostReport {
    let n = preds.len() as u64;
    let total_prompt: u64 = preds.iter().map(|p| p.usage.prompt_tokens).sum();
    let total_completion: u64 = preds.iter().map(|p| p.usage.completion_tokens).sum();
    let provenance = preds
        .iter()
        .map(|p| p.usage.provenance)
        .reduce(|a, b| if a == b { a } else { UsageProvenance::Mixed })
        .unwrap_or(UsageProvenance::Estimated);
    let avg = |total: u64| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    CostReport {
        n_documents: n,
        total_prompt_tokens: total_prompt,
        total_completion_tokens: total_completion,
        avg_prompt_tokens: avg(total_prompt),
        avg_completion_tokens: avg(total_completion),
        usage_provenance: provenance,
        estimated_cost: None,
        currency: None,
    }
}

/// `total_prompt × p_in/10^6 + total_completion × p_out/10^6`, exact.
pub fn estimate_cost(report: &CostReport, prices: &PriceTable) -> Result<Decimal, CostError> {
    for price in [prices.input_per_million, prices.output_per_million] {
        if price.is_sign_negative() && !price.is_zero() {
            return Err(CostError::NegativePrice(price));
        }
    }
    let million = Decimal::from(1_000_000u64);
    let cost = Decimal::from(report.total_prompt_tokens) * prices.input_per_million / million
        + Decimal::from(report.total_completion_tokens) * prices.output_per_million / million;
    Ok(cost.normalize())
}

/// One labeled cell of a cost grid.
pub type CostCell<'a> = (String, usize, &'a CostReport);

/// Render cost cells as a strategy × few-shot grid with prompt-token
/// and completion-token sections.
pub fn render_cost_table(cells: &[CostCell<'_>]) -> String {
    let mut ks: Vec<usize> = cells.iter().map(|(_, k, _)| *k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut strategies: Vec<&str> = cells.iter().map(|(s, _, _)| s.as_str()).collect();
    strategies.dedup();

    let lookup = |s: &str, k: usize| {
        cells.iter().find(|(cs, ck, _)| cs == s && *ck == k).map(|(_, _, r)| *r)
    };
    let mut out = String::new();
    for (section, pick) in [
        ("prompt tokens", true),
        ("completion tokens", false),
    ] {
        out.push_str(&format!("[{section}]\n"));
        out.push_str(&format!("{:<10}", "prompt"));
        for k in &ks {
            out.push_str(&format!("{k:>12}"));
        }
        out.push('\n');
        for s in &strategies {
            out.push_str(&format!("{s:<10}"));
            for k in &ks {
                match lookup(s, *k) {
                    Some(r) => {
                        let v =
                            if pick { r.avg_prompt_tokens } else { r.avg_completion_tokens };
                        out.push_str(&format!("{v:>12.2}"));
                    }
                    None => out.push_str(&format!("{:>12}", "-")),
                }
            }
            out.push('\n');
        }
    }
    out
}
