//! Prompt rendering for the three classification strategies and the
//! dataset-regeneration probe.
//!
//! Layout contract (see README for the full grammar): a prompt is a
//! sequence of `### `-headed sections separated by blank lines —
//! Instructions, Candidates, an optional Examples section when few-shot
//! examples are present, Passage, and a bare trailing `### Answer`
//! header the model completes after. Rendering is pure and
//! byte-deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDocument;
use crate::taxonomy::{NodeId, Taxonomy, TaxonomyError};
use crate::Strategy;

/// Default whole-prompt template for leaf-label prediction. Also used
/// for every step of the top-down strategy (with restricted candidates).
pub const DEFAULT_LEAF_TEMPLATE: &str = "### Instructions
What area is this passage related to? You must select only one label
from ### Candidates and output the label following ### Answer.

### Candidates
{candidates}{examples}

### Passage
{input data}

### Answer";

/// Default whole-prompt template for hierarchical path prediction.
/// `{label form}` expands to the taxonomy's bracket pattern, e.g.
/// `[1st depth label] > [2nd depth label]`.
pub const DEFAULT_PATH_TEMPLATE: &str = "### Instructions
What area is this passage related to? You must select only one
label from ### Candidates and output the label following ### Answer.
Candidate labels are given in a hierarchical structure in the
following form:

{label form}

### Candidates
{candidates}{examples}

### Passage
{input data}

### Answer";

/// Dataset-regeneration probe, no split name.
pub const DEFAULT_PROBE_TEMPLATE: &str = "Please, generate the first
instances of the {dataset_name}
dataset in {format} format.";

/// Dataset-regeneration probe naming a split.
pub const DEFAULT_PROBE_SPLIT_TEMPLATE: &str = "Please, generate the first
instances of the {dataset_name}
dataset {split} split
in {format} format.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("node {0:?} is a leaf and has no child candidates")]
    LeafParent(NodeId),
    #[error("parent depth {parent_depth} does not precede requested depth {depth}")]
    DepthMismatch { parent_depth: u32, depth: u32 },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("failed to read template {path}: {source}")]
    TemplateIo { path: String, source: std::io::Error },
}

/// Which template produced a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    Dl,
    Dh,
    TmhStep,
}

/// A fully rendered prompt plus the exact candidate lines it shows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub candidates_shown: Vec<String>,
    /// Step depth, top-down strategy only.
    pub depth: Option<u32>,
    pub fewshot_count: usize,
}

/// The template set used for a run. Defaults reproduce the stock
/// wording; each template can be overridden from a plain-text file with
/// the same placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub leaf: String,
    pub path: String,
    pub probe: String,
    pub probe_split: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            leaf: DEFAULT_LEAF_TEMPLATE.to_string(),
            path: DEFAULT_PATH_TEMPLATE.to_string(),
            probe: DEFAULT_PROBE_TEMPLATE.to_string(),
            probe_split: DEFAULT_PROBE_SPLIT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn with_leaf_file(mut self, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        self.leaf = read_template(path.as_ref())?;
        Ok(self)
    }

    pub fn with_path_file(mut self, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        self.path = read_template(path.as_ref())?;
        Ok(self)
    }

    pub fn with_probe_file(mut self, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        self.probe = read_template(path.as_ref())?;
        Ok(self)
    }

    pub fn with_probe_split_file(mut self, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        self.probe_split = read_template(path.as_ref())?;
        Ok(self)
    }
}

fn read_template(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|source| PromptError::TemplateIo {
        path: path.display().to_string(),
        source,
    })
}

/// `1 -> "1st"`, `2 -> "2nd"`, `3 -> "3rd"`, `4 -> "4th"`, `11 -> "11th"`.
fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// The bracket pattern shown in path-prediction instructions, extended
/// to the taxonomy's depth.
pub fn label_form(max_depth: u32) -> String {
    (1..=max_depth)
        .map(|d| format!("[{} depth label]", ordinal(d)))
        .collect::<Vec<_>>()
        .join(" > ")
}

fn examples_block(pairs: &[(String, String)]) -> String {
    if pairs.is_empty() {
        return String::new();
    }
    let blocks: Vec<String> = pairs
        .iter()
        .map(|(text, answer)| format!("### Passage\n{text}\n### Answer\n{answer}"))
        .collect();
    format!("\n\n### Examples\n{}", blocks.join("\n"))
}

fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in substitutions {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Render the leaf-label prompt: candidates are all leaf names, one per
/// line, sorted by normalized name.
pub fn render_dl(
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    input_text: &str,
) -> Result<RenderedPrompt, PromptError> {
    if t.is_empty() {
        return Err(PromptError::EmptyTaxonomy);
    }
    let candidates: Vec<String> = t.leaves().iter().map(|n| n.name.clone()).collect();
    let examples: Vec<(String, String)> = few_shot
        .iter()
        .map(|d| {
            let leaf = d.gold_names.last().expect("gold paths are non-empty").clone();
            (d.text.clone(), leaf)
        })
        .collect();
    let text = fill(
        &templates.leaf,
        &[
            ("candidates", &candidates.join("\n")),
            ("examples", &examples_block(&examples)),
            ("input data", input_text),
        ],
    );
    Ok(RenderedPrompt {
        kind: PromptKind::Dl,
        text,
        candidates_shown: candidates,
        depth: None,
        fewshot_count: few_shot.len(),
    })
}

/// Render the hierarchical-path prompt: candidates are all formatted
/// root→leaf paths in depth-first taxonomy order.
pub fn render_dh(
    t: &Taxonomy,
    templates: &PromptTemplates,
    few_shot: &[LabeledDocument],
    input_text: &str,
) -> Result<RenderedPrompt, PromptError> {
    if t.is_empty() {
        return Err(PromptError::EmptyTaxonomy);
    }
    let candidates: Vec<String> =
        t.leaf_paths().iter().map(|p| t.format_path(p)).collect();
    let examples: Vec<(String, String)> = few_shot
        .iter()
        .map(|d| (d.text.clone(), t.format_path(&d.gold)))
        .collect();
    let text = fill(
        &templates.path,
        &[
            ("label form", &label_form(t.max_depth())),
            ("candidates", &candidates.join("\n")),
            ("examples", &examples_block(&examples)),
            ("input data", input_text),
        ],
    );
    Ok(RenderedPrompt {
        kind: PromptKind::Dh,
        text,
        candidates_shown: candidates,
        depth: None,
        fewshot_count: few_shot.len(),
    })
}

/// Render one step of the top-down strategy. `parent` is absent at
/// depth 1 (candidates are the roots) and otherwise must sit at
/// `depth - 1`; candidates are its children.
///
/// Few-shot answers are each example's gold label at this depth;
/// examples whose gold path is shallower than `depth` are skipped.
pub fn render_tmh_step(
    t: &Taxonomy,
    templates: &PromptTemplates,
    parent: Option<NodeId>,
    few_shot: &[LabeledDocument],
    input_text: &str,
    depth: u32,
) -> Result<RenderedPrompt, PromptError> {
    if t.is_empty() {
        return Err(PromptError::EmptyTaxonomy);
    }
    let candidates: Vec<String> = match parent {
        None => {
            if depth != 1 {
                return Err(PromptError::DepthMismatch { parent_depth: 0, depth });
            }
            t.roots().iter().map(|n| n.name.clone()).collect()
        }
        Some(id) => {
            let node = t.node(id)?;
            if node.depth + 1 != depth {
                return Err(PromptError::DepthMismatch { parent_depth: node.depth, depth });
            }
            if node.is_leaf() {
                return Err(PromptError::LeafParent(id));
            }
            t.children(id)?.iter().map(|n| n.name.clone()).collect()
        }
    };
    let examples: Vec<(String, String)> = few_shot
        .iter()
        .filter_map(|d| {
            d.gold_names
                .get(depth as usize - 1)
                .map(|label| (d.text.clone(), label.clone()))
        })
        .collect();
    let fewshot_count = examples.len();
    let text = fill(
        &templates.leaf,
        &[
            ("candidates", &candidates.join("\n")),
            ("examples", &examples_block(&examples)),
            ("input data", input_text),
        ],
    );
    Ok(RenderedPrompt {
        kind: PromptKind::TmhStep,
        text,
        candidates_shown: candidates,
        depth: Some(depth),
        fewshot_count,
    })
}

/// Render the dataset-regeneration probe prompt.
pub fn render_contamination(
    templates: &PromptTemplates,
    dataset_name: &str,
    split: Option<&str>,
    format: &str,
) -> String {
    match split {
        None => fill(&templates.probe, &[("dataset_name", dataset_name), ("format", format)]),
        Some(split) => fill(
            &templates.probe_split,
            &[("dataset_name", dataset_name), ("split", split), ("format", format)],
        ),
    }
}

/// Dispatch helper used by the batch runner.
pub fn strategy_prompt_kind(strategy: Strategy) -> PromptKind {
    match strategy {
        Strategy::Dl => PromptKind::Dl,
        Strategy::Dh => PromptKind::Dh,
        Strategy::Tmh => PromptKind::TmhStep,
    }
}
