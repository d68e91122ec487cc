//! Transition graphs of open maps and structural-set enumeration.

use std::collections::BTreeSet;
use std::fmt;

use crate::model::OpenMapModel;

/// Exhaustive structural-set search is used up to this many free vertices;
/// larger graphs fall back to a greedy heuristic.
pub const EXHAUSTIVE_VERTEX_LIMIT: usize = 22;

/// Directed graph of allowed cell-to-cell transitions. Hole vertices have
/// out-degree zero in the open graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
    hole: BTreeSet<usize>,
}

impl TransitionGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .range((i, 0)..(i + 1, 0))
            .map(|&(_, j)| j)
    }

    pub fn is_hole_vertex(&self, i: usize) -> bool {
        self.hole.contains(&i)
    }

    pub fn hole_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.hole.iter().copied()
    }

    /// DOT rendering; hole vertices are drawn as open circles.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph Gamma_H {\n");
        for v in 0..self.vertex_count {
            if self.hole.contains(&v) {
                out.push_str(&format!("  v{} [shape=circle,style=open];\n", v + 1));
            } else {
                out.push_str(&format!("  v{};\n", v + 1));
            }
        }
        for &(i, j) in &self.edges {
            out.push_str(&format!("  v{} -> v{};\n", i + 1, j + 1));
        }
        out.push_str("}\n");
        out
    }
}

/// Build the open-system transition graph from the declared images: edge
/// `(i, j)` whenever cell `j` lies inside the image of cell `i` and `i` is
/// not a hole.
pub fn build_graph(model: &OpenMapModel) -> TransitionGraph {
    build_with_rows(model, false)
}

/// The closed system's graph: as [`build_graph`] but with hole rows kept.
pub fn build_closed_graph(model: &OpenMapModel) -> TransitionGraph {
    build_with_rows(model, true)
}

fn build_with_rows(model: &OpenMapModel, include_hole_rows: bool) -> TransitionGraph {
    let m = model.cell_count();
    let mut edges = BTreeSet::new();
    for i in 0..m {
        if !include_hole_rows && model.is_hole(i) {
            continue;
        }
        let (a, b) = model.image_cuts(i);
        for j in a..b {
            edges.insert((i, j));
        }
    }
    TransitionGraph {
        vertex_count: m,
        edges,
        hole: model.hole_indices().collect(),
    }
}

/// True when the subgraph induced on `subset` has no directed cycle.
/// Self-loops count as cycles. Deterministic DFS in ascending order.
pub fn is_acyclic(graph: &TransitionGraph, subset: &BTreeSet<usize>) -> bool {
    // 0 unvisited, 1 on stack, 2 done
    let mut state = vec![0u8; graph.vertex_count()];
    for &start in subset {
        if state[start] != 0 {
            continue;
        }
        // iterative DFS with explicit successor cursors
        let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        state[start] = 1;
        let succ: Vec<usize> = graph.successors(start).filter(|v| subset.contains(v)).collect();
        stack.push((start, succ, 0));
        while let Some((v, succ, cursor)) = stack.last_mut() {
            if *cursor < succ.len() {
                let next = succ[*cursor];
                *cursor += 1;
                match state[next] {
                    1 => return false,
                    0 => {
                        state[next] = 1;
                        let ns: Vec<usize> =
                            graph.successors(next).filter(|u| subset.contains(u)).collect();
                        stack.push((next, ns, 0));
                    }
                    _ => {}
                }
            } else {
                state[*v] = 2;
                stack.pop();
            }
        }
    }
    true
}

/// A vertex set containing every hole vertex whose complement induces an
/// acyclic subgraph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuralSet {
    vertices: Vec<usize>,
    vertex_count: usize,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum GraphError {
    #[error("set {0} is not structural: {1}")]
    NotStructural(String, String),
}

impl StructuralSet {
    /// Validate and build a structural set from 0-based vertex indices.
    pub fn new(graph: &TransitionGraph, vertices: &[usize]) -> Result<Self, GraphError> {
        let set: BTreeSet<usize> = vertices.iter().copied().collect();
        let label = render_set(&set);
        if let Some(&v) = set.iter().find(|&&v| v >= graph.vertex_count()) {
            return Err(GraphError::NotStructural(
                label,
                format!("vertex v{} does not exist", v + 1),
            ));
        }
        if let Some(h) = graph.hole_vertices().find(|h| !set.contains(h)) {
            return Err(GraphError::NotStructural(
                label,
                format!("hole vertex v{} is missing", h + 1),
            ));
        }
        let complement: BTreeSet<usize> =
            (0..graph.vertex_count()).filter(|v| !set.contains(v)).collect();
        if !is_acyclic(graph, &complement) {
            return Err(GraphError::NotStructural(
                label,
                "complement induces a cycle".into(),
            ));
        }
        Ok(StructuralSet {
            vertices: set.into_iter().collect(),
            vertex_count: graph.vertex_count(),
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.vertices.len() == self.vertex_count
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.vertex_count).filter(|v| !self.contains(*v)).collect()
    }

    /// "{v1,v3,v4}"
    pub fn label(&self) -> String {
        render_set(&self.vertices.iter().copied().collect())
    }
}

impl fmt::Display for StructuralSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

fn render_set(set: &BTreeSet<usize>) -> String {
    let inner: Vec<String> = set.iter().map(|v| format!("v{}", v + 1)).collect();
    format!("{{{}}}", inner.join(","))
}

/// Parse a selector like "v1,v3,v4" (or "1,3,4") into 0-based indices.
pub fn parse_selector(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let p = part.trim().trim_start_matches('v');
        let idx: usize = p
            .parse()
            .map_err(|_| format!("bad vertex '{part}' in selector"))?;
        if idx == 0 {
            return Err("vertices are numbered from 1".into());
        }
        out.push(idx - 1);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// All structural sets ordered by size then lexicographically, truncated to
/// `limit`. Exhaustive for up to [`EXHAUSTIVE_VERTEX_LIMIT`] non-hole
/// vertices; beyond that a greedy feedback-vertex-set heuristic returns a
/// sound nonempty subset (each candidate re-verified by [`is_acyclic`]).
pub fn enumerate_structural_sets(graph: &TransitionGraph, limit: usize) -> Vec<StructuralSet> {
    let m = graph.vertex_count();
    let free: Vec<usize> = (0..m).filter(|v| !graph.is_hole_vertex(*v)).collect();
    let mut found: Vec<Vec<usize>> = Vec::new();

    if free.len() <= EXHAUSTIVE_VERTEX_LIMIT {
        for mask in 0u64..(1u64 << free.len()) {
            let complement: BTreeSet<usize> = free
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &v)| v)
                .collect();
            if is_acyclic(graph, &complement) {
                found.push((0..m).filter(|v| !complement.contains(v)).collect());
            }
        }
    } else {
        // grow a maximal acyclic complement greedily
        let mut complement: BTreeSet<usize> = BTreeSet::new();
        for &v in &free {
            complement.insert(v);
            if !is_acyclic(graph, &complement) {
                complement.remove(&v);
            }
        }
        found.push((0..m).filter(|v| !complement.contains(v)).collect());
        if !complement.is_empty() {
            found.push((0..m).collect());
        }
    }

    found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    found.dedup();
    found
        .into_iter()
        .take(limit)
        .map(|vertices| {
            StructuralSet::new(graph, &vertices).expect("enumerated sets are structural")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn set(vs: &[usize]) -> BTreeSet<usize> {
        vs.iter().copied().collect()
    }

    #[test]
    fn tent_open_graph_edges() {
        let g = build_graph(&fixtures::tent());
        let want = [(1, 2), (1, 3), (2, 2), (2, 3), (3, 0), (3, 1)];
        assert_eq!(g.edges().collect::<Vec<_>>(), want);
        assert_eq!(g.successors(0).count(), 0);
    }

    #[test]
    fn closed_graph_restores_hole_rows() {
        let model = fixtures::tent();
        let open = build_graph(&model);
        let closed = build_closed_graph(&model);
        let mut expected: BTreeSet<(usize, usize)> = open.edges().collect();
        expected.insert((0, 0));
        expected.insert((0, 1));
        assert_eq!(closed.edges().collect::<BTreeSet<_>>(), expected);
        // open edges = closed edges minus hole rows, for all fixtures
        for model in [fixtures::tent(), fixtures::cubic(), fixtures::two_cell_shift()] {
            let open = build_graph(&model);
            let closed = build_closed_graph(&model);
            let filtered: BTreeSet<(usize, usize)> = closed
                .edges()
                .filter(|&(i, _)| !model.is_hole(i))
                .collect();
            assert_eq!(open.edges().collect::<BTreeSet<_>>(), filtered);
        }
    }

    #[test]
    fn cubic_has_same_graph_as_tent() {
        assert_eq!(
            build_graph(&fixtures::tent()),
            build_graph(&fixtures::cubic())
        );
    }

    #[test]
    fn empty_hole_gives_the_closed_graph() {
        let mut file = fixtures::tent_file();
        file.hole.clear();
        let closed_model = crate::model::OpenMapModel::from_file(&file).unwrap();
        let open = build_graph(&closed_model);
        let mut expected: BTreeSet<(usize, usize)> =
            build_graph(&fixtures::tent()).edges().collect();
        expected.insert((0, 0));
        expected.insert((0, 1));
        assert_eq!(open.edges().collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn large_graphs_use_the_greedy_heuristic() {
        // a 30-vertex cycle through vertex 0 (the hole breaks it), plus a
        // self-loop at vertex 5 to force a nontrivial feedback set
        let m = 30;
        let mut edges: BTreeSet<(usize, usize)> = (1..m).map(|v| (v, (v + 1) % m)).collect();
        edges.insert((5, 5));
        let g = TransitionGraph {
            vertex_count: m,
            edges,
            hole: [0].into_iter().collect(),
        };
        let sets = enumerate_structural_sets(&g, 8);
        assert!(!sets.is_empty());
        assert!(sets.iter().any(|s| s.is_full()));
        for s in &sets {
            let complement: BTreeSet<usize> = s.complement().into_iter().collect();
            assert!(is_acyclic(&g, &complement));
            assert!(s.contains(0));
        }
        // the greedy set is a strict subset of V
        assert!(sets[0].len() < m);
    }

    #[test]
    fn edges_match_nonempty_intersections() {
        for model in [fixtures::tent(), fixtures::cubic(), fixtures::two_cell_shift()] {
            let g = build_graph(&model);
            let m = model.cell_count();
            for i in (0..m).filter(|&i| !model.is_hole(i)) {
                for j in 0..m {
                    assert_eq!(
                        g.has_edge(i, j),
                        model.cell_intersection(i, j).is_some(),
                        "edge ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn acyclicity_counts_self_loops() {
        let g = build_graph(&fixtures::tent());
        assert!(is_acyclic(&g, &set(&[1])));
        assert!(!is_acyclic(&g, &set(&[2]))); // self-loop 3 -> 3
        assert!(!is_acyclic(&g, &set(&[1, 3]))); // cycle 2 -> 4 -> 2
        assert!(is_acyclic(&g, &set(&[])));
    }

    #[test]
    fn tent_structural_sets() {
        let g = build_graph(&fixtures::tent());
        let sets = enumerate_structural_sets(&g, 64);
        let labels: Vec<String> = sets.iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["{v1,v2,v3}", "{v1,v3,v4}", "{v1,v2,v3,v4}"]);
        assert!(sets.iter().any(|s| s.is_full()));
        assert!(!labels.contains(&"{v1,v2,v4}".to_string()));
    }

    #[test]
    fn explicit_set_validation() {
        let g = build_graph(&fixtures::tent());
        assert!(StructuralSet::new(&g, &[0, 2, 3]).is_ok());
        assert!(StructuralSet::new(&g, &[0, 1, 3]).is_err()); // {v3} has a self-loop
        assert!(StructuralSet::new(&g, &[2, 3]).is_err()); // hole missing
    }

    #[test]
    fn selector_parsing() {
        assert_eq!(parse_selector("v1,v3,v4").unwrap(), vec![0, 2, 3]);
        assert_eq!(parse_selector("1, 3").unwrap(), vec![0, 2]);
        assert!(parse_selector("v0").is_err());
        assert!(parse_selector("x").is_err());
    }

    #[test]
    fn dot_rendering() {
        let dot = build_graph(&fixtures::two_cell_shift()).to_dot();
        let want = "digraph Gamma_H {\n  v1 [shape=circle,style=open];\n  v2;\n  v2 -> v1;\n}\n";
        assert_eq!(dot, want);
    }
}
