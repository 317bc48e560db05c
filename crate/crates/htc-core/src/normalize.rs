//! Text normalization and edit-distance resolution of free-form model
//! output onto a fixed candidate label set.
//!
//! Normalization lowercases, strips a fixed ASCII symbol set, collapses
//! whitespace and applies Unicode NFC. Both sides of every comparison in
//! this crate (scoring and resolution) go through [`normalize_text`].

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Quote-like symbols deleted outright by [`normalize_text`], so
/// contractions collapse ("Alzheimer's" → "alzheimers").
pub const DELETED_SYMBOLS: &[char] = &['\'', '"', '`'];

/// Separator symbols replaced by whitespace before collapsing, so
/// "machine-learning" and "machine learning" normalize identically.
pub const SPACED_SYMBOLS: &[char] = &[
    '.', ',', ';', ':', '!', '?', '(', ')', '[', ']', '{', '}', '/', '\\', '-', '_', '&',
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
}

/// A model output mapped onto the nearest candidate label.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResolvedLabel {
    /// The winning candidate, verbatim as it appeared in the candidate set.
    pub label: String,
    /// Levenshtein distance between the normalized output and the
    /// normalized candidate.
    pub distance: usize,
    /// True iff `distance == 0`.
    pub exact: bool,
}

/// Lowercase, strip [`DELETED_SYMBOLS`], turn [`SPACED_SYMBOLS`] into
/// whitespace, collapse whitespace runs to a single space, trim, and
/// NFC-normalize. Idempotent.
pub fn normalize_text(s: &str) -> String {
    let lowered: String = s.nfc().collect::<String>().to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !DELETED_SYMBOLS.contains(c))
        .map(|c| if SPACED_SYMBOLS.contains(&c) { ' ' } else { c })
        .collect();
    let mut out = String::with_capacity(stripped.len());
    let mut pending_space = false;
    for c in stripped.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    // Stripping a symbol can juxtapose a base char and a combining mark
    // that now compose; renormalize so the result is a fixed point.
    out.nfc().collect()
}

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            let next = (diag + cost).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Map a raw model output to the nearest candidate by Levenshtein
/// distance on normalized forms.
///
/// Ties break by normalized candidate name, then by position in the
/// candidate list. Always returns a member of `candidates`.
pub fn resolve_label<S: AsRef<str>>(
    output: &str,
    candidates: &[S],
) -> Result<ResolvedLabel, ResolveError> {
    if candidates.is_empty() {
        return Err(ResolveError::EmptyCandidateSet);
    }
    let norm_out = normalize_text(output);
    let mut best: Option<(usize, String, usize)> = None; // (distance, normalized, index)
    for (idx, cand) in candidates.iter().enumerate() {
        let norm_cand = normalize_text(cand.as_ref());
        let dist = levenshtein(&norm_out, &norm_cand);
        let better = match &best {
            None => true,
            Some((d, n, _)) => dist < *d || (dist == *d && norm_cand < *n),
        };
        if better {
            best = Some((dist, norm_cand, idx));
        }
    }
    let (distance, _, idx) = best.expect("candidates checked non-empty");
    Ok(ResolvedLabel {
        label: candidates[idx].as_ref().to_string(),
        distance,
        exact: distance == 0,
    })
}
