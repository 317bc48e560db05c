//! Rooted label forest: the hierarchical candidate label set and all
//! structural queries over it.
//!
//! Node identity is the full path of normalized names, so identically
//! named labels under different parents are distinct nodes. Children are
//! kept sorted by normalized name so candidate order is deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{normalize_text, resolve_label, ResolvedLabel};

/// Index of a node inside its [`Taxonomy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("label path is empty")]
    EmptyPath,
    #[error("label name is empty after normalization: {0:?}")]
    EmptyName(String),
    #[error("label name contains the path separator \" > \": {0:?}")]
    NameContainsSeparator(String),
    #[error("unknown node id {0:?}")]
    UnknownNode(NodeId),
    #[error("node {child} is claimed by more than one parent")]
    ConflictingParent { child: u32 },
    #[error("node {node} has depth {depth} but its parent implies {expected}")]
    DepthMismatch { node: u32, depth: u32, expected: u32 },
    #[error("node {0} is unreachable from any root")]
    Unreachable(u32),
    #[error("cannot parse an empty string as a label path")]
    EmptyString,
    #[error("invalid taxonomy document: {0}")]
    InvalidDocument(String),
}

/// One label in the hierarchy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelNode {
    pub id: NodeId,
    pub name: String,
    /// Normalized display name, cached at build time.
    pub normalized: String,
    /// Root children have depth 1.
    pub depth: u32,
    pub parent: Option<NodeId>,
    /// Sorted by normalized name, duplicate-free.
    pub children: Vec<NodeId>,
}

impl LabelNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A root→leaf (or root→internal) chain of node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPath(pub Vec<NodeId>);

impl LabelPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn leaf(&self) -> Option<NodeId> {
        self.0.last().copied()
    }
}

/// How one ` > `-separated segment of a textual path was matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub resolved: ResolvedLabel,
    /// True iff the raw segment equalled the candidate name verbatim,
    /// before any normalization.
    pub verbatim: bool,
}

/// Result of [`Taxonomy::parse_path`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedPath {
    /// Every segment resolved; `path` has one node per segment.
    Resolved { path: LabelPath, segments: Vec<SegmentMatch> },
    /// Resolution hit a leaf with segments left over.
    Partial { path: LabelPath, segments: Vec<SegmentMatch>, unresolved: Vec<String> },
}

impl ParsedPath {
    pub fn path(&self) -> &LabelPath {
        match self {
            ParsedPath::Resolved { path, .. } | ParsedPath::Partial { path, .. } => path,
        }
    }

    pub fn segments(&self) -> &[SegmentMatch] {
        match self {
            ParsedPath::Resolved { segments, .. } | ParsedPath::Partial { segments, .. } => {
                segments
            }
        }
    }
}

/// The hierarchical candidate label set.
///
/// Immutable after build; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<LabelNode>,
    roots: Vec<NodeId>,
    max_depth: u32,
}

impl Taxonomy {
    /// Build a forest from label-name paths (typically the gold paths of
    /// a dataset). Idempotent under duplicated input paths.
    pub fn build<P, S>(paths: P) -> Result<Self, TaxonomyError>
    where
        P: IntoIterator,
        P::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut t = Taxonomy { nodes: Vec::new(), roots: Vec::new(), max_depth: 0 };
        for path in paths {
            t.insert_path(path.as_ref())?;
        }
        Ok(t)
    }

    fn insert_path<S: AsRef<str>>(&mut self, names: &[S]) -> Result<(), TaxonomyError> {
        if names.is_empty() {
            return Err(TaxonomyError::EmptyPath);
        }
        let mut parent: Option<NodeId> = None;
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            let normalized = normalize_text(name);
            if normalized.is_empty() {
                return Err(TaxonomyError::EmptyName(name.to_string()));
            }
            if name.contains(" > ") {
                // Would make format_path/parse_path ambiguous.
                return Err(TaxonomyError::NameContainsSeparator(name.to_string()));
            }
            let siblings: &[NodeId] = match parent {
                None => &self.roots,
                Some(p) => &self.nodes[p.idx()].children,
            };
            let existing = siblings
                .iter()
                .copied()
                .find(|id| self.nodes[id.idx()].normalized == normalized);
            let id = match existing {
                Some(id) => id,
                None => {
                    let id = NodeId(self.nodes.len() as u32);
                    let depth = i as u32 + 1;
                    let pos = siblings
                        .partition_point(|s| self.nodes[s.idx()].normalized < normalized);
                    self.nodes.push(LabelNode {
                        id,
                        name: name.to_string(),
                        normalized,
                        depth,
                        parent,
                        children: Vec::new(),
                    });
                    match parent {
                        None => self.roots.insert(pos, id),
                        Some(p) => self.nodes[p.idx()].children.insert(pos, id),
                    }
                    self.max_depth = self.max_depth.max(depth);
                    id
                }
            };
            parent = Some(id);
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Result<&LabelNode, TaxonomyError> {
        self.nodes.get(id.idx()).ok_or(TaxonomyError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Root nodes (depth 1), sorted by normalized name.
    pub fn roots(&self) -> Vec<&LabelNode> {
        self.roots.iter().map(|id| &self.nodes[id.idx()]).collect()
    }

    /// Number of labels at each depth; index 0 is depth 1.
    pub fn depth_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.max_depth as usize];
        for n in &self.nodes {
            counts[n.depth as usize - 1] += 1;
        }
        counts
    }

    /// All leaves, sorted by normalized name.
    pub fn leaves(&self) -> Vec<&LabelNode> {
        let mut leaves: Vec<&LabelNode> = self.nodes.iter().filter(|n| n.is_leaf()).collect();
        leaves.sort_by(|a, b| a.normalized.cmp(&b.normalized));
        leaves
    }

    /// Children of `id` in sorted order; empty for leaves.
    pub fn children(&self, id: NodeId) -> Result<Vec<&LabelNode>, TaxonomyError> {
        let node = self.node(id)?;
        Ok(node.children.iter().map(|c| &self.nodes[c.idx()]).collect())
    }

    /// Root→node chain ending at `id`.
    pub fn ancestor_path(&self, id: NodeId) -> Result<LabelPath, TaxonomyError> {
        let mut chain = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = self.node(c)?;
            chain.push(c);
            cur = node.parent;
        }
        chain.reverse();
        Ok(LabelPath(chain))
    }

    /// Display names along a path, root first.
    pub fn path_names(&self, path: &LabelPath) -> Vec<String> {
        path.0.iter().map(|id| self.nodes[id.idx()].name.clone()).collect()
    }

    /// Join the path's names with ` > `.
    pub fn format_path(&self, path: &LabelPath) -> String {
        self.path_names(path).join(" > ")
    }

    /// All root→leaf paths in depth-first order (roots and children
    /// sorted by normalized name). One entry per leaf.
    pub fn leaf_paths(&self) -> Vec<LabelPath> {
        fn visit(t: &Taxonomy, id: NodeId, trail: &mut Vec<NodeId>, out: &mut Vec<LabelPath>) {
            trail.push(id);
            let node = &t.nodes[id.idx()];
            if node.is_leaf() {
                out.push(LabelPath(trail.clone()));
            } else {
                for c in &node.children {
                    visit(t, *c, trail, out);
                }
            }
            trail.pop();
        }
        let mut out = Vec::new();
        let mut trail = Vec::new();
        for root in &self.roots {
            visit(self, *root, &mut trail, &mut out);
        }
        out
    }

    /// Split `s` on ` > ` and resolve each segment level by level.
    ///
    /// Every segment resolves to *some* candidate (nearest by normalized
    /// Levenshtein distance); resolution stops early only when a leaf is
    /// reached with segments remaining.
    pub fn parse_path(&self, s: &str) -> Result<ParsedPath, TaxonomyError> {
        let raw_segments: Vec<&str> = s.split(" > ").map(str::trim).collect();
        if raw_segments.iter().all(|seg| seg.is_empty()) {
            return Err(TaxonomyError::EmptyString);
        }
        let mut ids = Vec::new();
        let mut segments = Vec::new();
        let mut level: Vec<NodeId> = self.roots.clone();
        for (i, seg) in raw_segments.iter().enumerate() {
            if level.is_empty() || seg.is_empty() {
                let unresolved = raw_segments[i..].iter().map(|s| s.to_string()).collect();
                return Ok(ParsedPath::Partial { path: LabelPath(ids), segments, unresolved });
            }
            let names: Vec<&str> =
                level.iter().map(|id| self.nodes[id.idx()].name.as_str()).collect();
            let resolved = resolve_label(seg, &names)
                .expect("level candidate set is non-empty by construction");
            let pos = names.iter().position(|n| *n == resolved.label).expect("winner is a member");
            let winner = level[pos];
            segments.push(SegmentMatch { verbatim: *seg == resolved.label, resolved });
            ids.push(winner);
            level = self.nodes[winner.idx()].children.clone();
        }
        Ok(ParsedPath::Resolved { path: LabelPath(ids), segments })
    }

    /// Serialize to the cache document format (see repo README).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": "taxonomy/v1",
            "roots": self.roots,
            "nodes": self.nodes.iter().map(|n| serde_json::json!({
                "id": n.id,
                "name": n.name,
                "depth": n.depth,
                "parent": n.parent,
                "children": n.children,
            })).collect::<Vec<_>>(),
        })
    }

    /// Load a cache document, validating forest structure: single
    /// parents, consistent depths, full reachability.
    pub fn from_json(doc: &serde_json::Value) -> Result<Self, TaxonomyError> {
        #[derive(Deserialize)]
        struct RawNode {
            id: NodeId,
            name: String,
            depth: u32,
            parent: Option<NodeId>,
            children: Vec<NodeId>,
        }
        #[derive(Deserialize)]
        struct RawDoc {
            roots: Vec<NodeId>,
            nodes: Vec<RawNode>,
        }
        let raw: RawDoc = serde_json::from_value(doc.clone())
            .map_err(|e| TaxonomyError::InvalidDocument(e.to_string()))?;
        let n = raw.nodes.len();
        let mut nodes: Vec<Option<LabelNode>> = vec![None; n];
        for rn in raw.nodes {
            let normalized = normalize_text(&rn.name);
            if normalized.is_empty() {
                return Err(TaxonomyError::EmptyName(rn.name));
            }
            if rn.name.contains(" > ") {
                return Err(TaxonomyError::NameContainsSeparator(rn.name));
            }
            let slot = nodes
                .get_mut(rn.id.idx())
                .ok_or(TaxonomyError::InvalidDocument(format!("id {} out of range", rn.id.0)))?;
            if slot.is_some() {
                return Err(TaxonomyError::InvalidDocument(format!("duplicate id {}", rn.id.0)));
            }
            *slot = Some(LabelNode {
                id: rn.id,
                name: rn.name,
                normalized,
                depth: rn.depth,
                parent: rn.parent,
                children: rn.children,
            });
        }
        let mut nodes: Vec<LabelNode> = nodes
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(TaxonomyError::InvalidDocument("missing node id".into()))?;

        // Every node must be referenced as a child (or root) exactly once.
        let mut claimed = vec![false; n];
        for root in &raw.roots {
            let node =
                nodes.get(root.idx()).ok_or(TaxonomyError::UnknownNode(*root))?;
            if node.depth != 1 || node.parent.is_some() {
                return Err(TaxonomyError::DepthMismatch {
                    node: root.0,
                    depth: node.depth,
                    expected: 1,
                });
            }
            if claimed[root.idx()] {
                return Err(TaxonomyError::ConflictingParent { child: root.0 });
            }
            claimed[root.idx()] = true;
        }
        for i in 0..n {
            for c in nodes[i].children.clone() {
                let child = nodes.get(c.idx()).ok_or(TaxonomyError::UnknownNode(c))?;
                if child.parent != Some(nodes[i].id) {
                    return Err(TaxonomyError::ConflictingParent { child: c.0 });
                }
                if child.depth != nodes[i].depth + 1 {
                    return Err(TaxonomyError::DepthMismatch {
                        node: c.0,
                        depth: child.depth,
                        expected: nodes[i].depth + 1,
                    });
                }
                if claimed[c.idx()] {
                    return Err(TaxonomyError::ConflictingParent { child: c.0 });
                }
                claimed[c.idx()] = true;
            }
        }
        if let Some(orphan) = claimed.iter().position(|c| !c) {
            return Err(TaxonomyError::Unreachable(orphan as u32));
        }
        for node in &mut nodes {
            node.children.dedup();
        }
        // Re-sort child lists so query order is canonical regardless of
        // how the document was produced.
        let by_norm: Vec<String> = nodes.iter().map(|n| n.normalized.clone()).collect();
        let mut roots = raw.roots;
        roots.sort_by(|a, b| by_norm[a.idx()].cmp(&by_norm[b.idx()]));
        for node in &mut nodes {
            node.children.sort_by(|a, b| by_norm[a.idx()].cmp(&by_norm[b.idx()]));
        }
        let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(Taxonomy { nodes, roots, max_depth })
    }

    /// Find the leaf-or-internal node reached by following `names` from
    /// the roots by normalized-name equality.
    pub fn lookup_path<S: AsRef<str>>(&self, names: &[S]) -> Option<LabelPath> {
        let mut ids = Vec::new();
        let mut level: &[NodeId] = &self.roots;
        for name in names {
            let normalized = normalize_text(name.as_ref());
            let id = level
                .iter()
                .copied()
                .find(|id| self.nodes[id.idx()].normalized == normalized)?;
            ids.push(id);
            level = &self.nodes[id.idx()].children;
        }
        if ids.is_empty() {
            None
        } else {
            Some(LabelPath(ids))
        }
    }

    /// Internal consistency check used by tests and document loading.
    pub fn verify(&self) -> Result<(), TaxonomyError> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = self.roots.clone();
        while let Some(id) = stack.pop() {
            if seen[id.idx()] {
                return Err(TaxonomyError::ConflictingParent { child: id.0 });
            }
            seen[id.idx()] = true;
            let node = &self.nodes[id.idx()];
            for c in &node.children {
                let child = self.node(*c)?;
                if child.depth != node.depth + 1 {
                    return Err(TaxonomyError::DepthMismatch {
                        node: c.0,
                        depth: child.depth,
                        expected: node.depth + 1,
                    });
                }
                stack.push(*c);
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(TaxonomyError::Unreachable(orphan as u32));
        }
        Ok(())
    }
}

/// Canonical key for a name path: normalized names joined by ` > `.
pub fn path_key<S: AsRef<str>>(names: &[S]) -> String {
    names.iter().map(|n| normalize_text(n.as_ref())).collect::<Vec<_>>().join(" > ")
}
