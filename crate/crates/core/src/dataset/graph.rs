use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_TARGETS: [&str; 10] = [
    "Art",
    "Geography",
    "History",
    "Nature",
    "Science",
    "Personage",
    "Technology",
    "Education",
    "Economy",
    "Health",
];
pub const TARGET_COUNT: usize = 10;
pub const DEFAULT_DEPTH_CAP: usize = 8;

pub fn default_targets() -> Vec<String> {
    DEFAULT_TARGETS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EditKind {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeEdit {
    pub kind: EditKind,
    pub child: String,
    pub parent: String,
}

impl EdgeEdit {
    pub fn add(child: &str, parent: &str) -> Self {
        EdgeEdit {
            kind: EditKind::Add,
            child: child.into(),
            parent: parent.into(),
        }
    }

    pub fn remove(child: &str, parent: &str) -> Self {
        EdgeEdit {
            kind: EditKind::Remove,
            child: child.into(),
            parent: parent.into(),
        }
    }
}

/// A problem found while building the graph that did not abort it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop(String),
    RemovedMissingEdge { child: String, parent: String },
}

/// Parses `child<TAB>parent` lines. Blank lines and `#` comments are skipped.
pub fn parse_edges(text: &str, source_name: &str) -> Result<Vec<(String, String)>> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(p), None) if !c.trim().is_empty() && !p.trim().is_empty() => {
                edges.push((c.trim().to_string(), p.trim().to_string()));
            }
            _ => return Err(Error::parse(source_name, i + 1, "expected child<TAB>parent")),
        }
    }
    Ok(edges)
}

/// Parses `add|remove<TAB>child<TAB>parent` lines.
pub fn parse_overrides(text: &str, source_name: &str) -> Result<Vec<EdgeEdit>> {
    let mut edits = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let kind = match fields.first() {
            Some(&"add") => EditKind::Add,
            Some(&"remove") => EditKind::Remove,
            _ => return Err(Error::parse(source_name, i + 1, "edit must start with add or remove")),
        };
        if fields.len() != 3 || fields[1].is_empty() || fields[2].is_empty() {
            return Err(Error::parse(source_name, i + 1, "expected kind<TAB>child<TAB>parent"));
        }
        edits.push(EdgeEdit {
            kind,
            child: fields[1].to_string(),
            parent: fields[2].to_string(),
        });
    }
    Ok(edits)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_edges(path: &Path) -> Result<Vec<(String, String)>> {
    parse_edges(&read(path)?, &path.display().to_string())
}

pub fn load_overrides(path: &Path) -> Result<Vec<EdgeEdit>> {
    parse_overrides(&read(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryGraph {
    nodes: BTreeSet<String>,
    parents: BTreeMap<String, BTreeSet<String>>,
    targets: Vec<String>,
    overrides: Vec<EdgeEdit>,
}

impl CategoryGraph {
    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn overrides(&self) -> &[EdgeEdit] {
        &self.overrides
    }

    pub fn parents(&self, node: &str) -> impl Iterator<Item = &str> {
        self.parents
            .get(node)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.values().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, child: &str, parent: &str) -> bool {
        self.parents.get(child).is_some_and(|p| p.contains(parent))
    }

    fn target_rank(&self, name: &str) -> Option<usize> {
        self.targets.iter().position(|t| t == name)
    }

    /// Shortest upward path from `from` to `to`.
    fn path_between(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(node) = queue.pop_front() {
            for p in self.parents(node) {
                if !seen.insert(p) {
                    continue;
                }
                prev.insert(p, node);
                if p == to {
                    let mut path = vec![to.to_string()];
                    let mut cur = to;
                    while let Some(&c) = prev.get(cur) {
                        path.push(c.to_string());
                        cur = c;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(p);
            }
        }
        None
    }

    /// Every (descendant target, ancestor target) pair with a witness path.
    pub fn target_conflicts(&self) -> Vec<Vec<String>> {
        let mut conflicts = Vec::new();
        for a in &self.targets {
            for b in &self.targets {
                if a != b {
                    if let Some(path) = self.path_between(a, b) {
                        conflicts.push(path);
                    }
                }
            }
        }
        conflicts
    }

    /// Upward BFS from `categories`. Each frontier is sorted and deduplicated
    /// before expansion, so the result does not depend on input order.
    /// Returns the label and its depth.
    pub fn label(&self, categories: &[String], depth_cap: usize) -> Option<(&str, usize)> {
        let mut frontier: Vec<&str> = categories.iter().map(String::as_str).collect();
        frontier.sort_unstable();
        frontier.dedup();
        let mut visited: BTreeSet<&str> = frontier.iter().copied().collect();
        for depth in 0..=depth_cap {
            if frontier.is_empty() {
                break;
            }
            let best = frontier
                .iter()
                .filter_map(|n| self.target_rank(n))
                .min();
            if let Some(rank) = best {
                return Some((self.targets[rank].as_str(), depth));
            }
            let mut next: Vec<&str> = frontier
                .iter()
                .flat_map(|n| self.parents(n))
                .filter(|p| visited.insert(p))
                .collect();
            next.sort_unstable();
            frontier = next;
        }
        None
    }
}

fn insert_edge(
    nodes: &mut BTreeSet<String>,
    parents: &mut BTreeMap<String, BTreeSet<String>>,
    child: &str,
    parent: &str,
    violations: &mut Vec<Violation>,
) {
    nodes.insert(child.to_string());
    nodes.insert(parent.to_string());
    if child == parent {
        violations.push(Violation::SelfLoop(child.to_string()));
        return;
    }
    parents
        .entry(child.to_string())
        .or_default()
        .insert(parent.to_string());
}

/// Builds the graph, applying removals before additions. Self-loop edges
/// are dropped and reported; a target reachable from another target is an
/// error listing every offending path.
pub fn build_graph(
    edges: &[(String, String)],
    targets: &[String],
    overrides: &[EdgeEdit],
) -> Result<(CategoryGraph, Vec<Violation>)> {
    let distinct: BTreeSet<&String> = targets.iter().collect();
    if targets.len() != TARGET_COUNT || distinct.len() != TARGET_COUNT {
        return Err(Error::Validation(format!(
            "exactly {TARGET_COUNT} distinct target categories are required, got {}",
            distinct.len()
        )));
    }
    let mut violations = Vec::new();
    let mut nodes: BTreeSet<String> = targets.iter().cloned().collect();
    let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (c, p) in edges {
        insert_edge(&mut nodes, &mut parents, c, p, &mut violations);
    }
    let mut ordered: Vec<&EdgeEdit> = overrides.iter().collect();
    ordered.sort_by_key(|e| match e.kind {
        EditKind::Remove => 0,
        EditKind::Add => 1,
    });
    let mut additions = Vec::new();
    for edit in ordered {
        match edit.kind {
            EditKind::Remove => {
                let removed = parents
                    .get_mut(&edit.child)
                    .is_some_and(|set| set.remove(&edit.parent));
                if !removed {
                    violations.push(Violation::RemovedMissingEdge {
                        child: edit.child.clone(),
                        parent: edit.parent.clone(),
                    });
                }
            }
            EditKind::Add => additions.push(edit),
        }
    }
    for edit in additions {
        insert_edge(&mut nodes, &mut parents, &edit.child, &edit.parent, &mut violations);
    }
    parents.retain(|_, set| !set.is_empty());
    let graph = CategoryGraph {
        nodes,
        parents,
        targets: targets.to_vec(),
        overrides: overrides.to_vec(),
    };
    let conflicts = graph.target_conflicts();
    if !conflicts.is_empty() {
        let listed: Vec<String> = conflicts.iter().map(|p| p.join(" -> ")).collect();
        return Err(Error::Validation(format!(
            "target categories descend from other targets: {}",
            listed.join("; ")
        )));
    }
    Ok((graph, violations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(c, p)| (c.to_string(), p.to_string())).collect()
    }

    fn cats(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_step_label() {
        let (g, v) = build_graph(&e(&[("Painters", "Art")]), &default_targets(), &[]).unwrap();
        assert!(v.is_empty());
        assert_eq!(g.label(&cats(&["Painters"]), 8), Some(("Art", 1)));
        assert_eq!(g.label(&cats(&["History"]), 8), Some(("History", 0)));
        assert_eq!(g.label(&cats(&["Nowhere"]), 8), None);
    }

    #[test]
    fn override_redirects() {
        let edits = [
            EdgeEdit::add("Painters", "Personage"),
            EdgeEdit::remove("Painters", "Art"),
        ];
        let (g, _) = build_graph(&e(&[("Painters", "Art")]), &default_targets(), &edits).unwrap();
        assert_eq!(g.label(&cats(&["Painters"]), 8), Some(("Personage", 1)));
        assert!(!g.has_edge("Painters", "Art"));
    }

    #[test]
    fn remove_then_add_same_edge_keeps_it() {
        let edits = [EdgeEdit::add("X", "Art"), EdgeEdit::remove("X", "Art")];
        let (g, _) = build_graph(&e(&[("X", "Art")]), &default_targets(), &edits).unwrap();
        assert!(g.has_edge("X", "Art"));
    }

    #[test]
    fn tie_goes_to_earlier_target() {
        let edges = e(&[("A1", "Economy"), ("B1", "Art"), ("P", "A1"), ("P", "B1")]);
        let (g, _) = build_graph(&edges, &default_targets(), &[]).unwrap();
        assert_eq!(g.label(&cats(&["P"]), 8), Some(("Art", 2)));
        assert_eq!(g.label(&cats(&["A1", "B1"]), 8), Some(("Art", 1)));
        assert_eq!(g.label(&cats(&["B1", "A1"]), 8), Some(("Art", 1)));
    }

    #[test]
    fn shallower_target_beats_order() {
        let edges = e(&[("C", "Health"), ("C", "Mid"), ("Mid", "Art")]);
        let (g, _) = build_graph(&edges, &default_targets(), &[]).unwrap();
        assert_eq!(g.label(&cats(&["C"]), 8), Some(("Health", 1)));
    }

    #[test]
    fn cycles_and_depth_cap() {
        let edges = e(&[("A", "B"), ("B", "A"), ("B", "C"), ("C", "D"), ("D", "Art")]);
        let (g, _) = build_graph(&edges, &default_targets(), &[]).unwrap();
        assert_eq!(g.label(&cats(&["A"]), 8), Some(("Art", 4)));
        assert_eq!(g.label(&cats(&["A"]), 3), None);
        let (g, _) = build_graph(&e(&[("A", "B"), ("B", "A")]), &default_targets(), &[]).unwrap();
        assert_eq!(g.label(&cats(&["A"]), 8), None);
    }

    #[test]
    fn self_loops_reported() {
        let (g, v) = build_graph(&e(&[("A", "A"), ("A", "Art")]), &default_targets(), &[]).unwrap();
        assert_eq!(v, vec![Violation::SelfLoop("A".into())]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn target_conflict_is_an_error() {
        let edges = e(&[("Painting", "Art"), ("Art", "Culture"), ("Culture", "History")]);
        let err = build_graph(&edges, &default_targets(), &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Art -> Culture -> History"), "{msg}");
        let fix = [EdgeEdit::remove("Culture", "History")];
        assert!(build_graph(&edges, &default_targets(), &fix).is_ok());
    }

    #[test]
    fn wrong_target_count() {
        let mut t = default_targets();
        t.pop();
        assert!(build_graph(&[], &t, &[]).is_err());
        t.push("Art".into());
        assert!(build_graph(&[], &t, &[]).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_edges("a\tb\n\nbad line\n", "cats.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse_overrides("add\ta\tb\nswap\ta\tb\n", "o.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert_eq!(parse_overrides("remove\tx\ty\n", "o").unwrap(), vec![EdgeEdit::remove("x", "y")]);
    }

    #[test]
    fn no_overrides_is_identity() {
        let edges = e(&[("a", "b"), ("b", "Art"), ("c", "Nature")]);
        let (g, _) = build_graph(&edges, &default_targets(), &[]).unwrap();
        assert_eq!(g.edge_count(), 3);
        for (c, p) in &edges {
            assert!(g.has_edge(c, p));
        }
    }
}
