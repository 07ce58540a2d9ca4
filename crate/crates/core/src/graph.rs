//! Directed graphs with an in-neighbor index.
//!
//! Nodes are 0-based internally; files use 1-based indices (see [`crate::io`]).

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
}

/// Edge id into [`Graph::edges`].
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    // in_edges[v] = (source, edge id), sorted by source
    in_edges: Vec<Vec<(usize, EdgeId)>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range ends.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(GraphError::NodeOutOfRange(u, v, node_count));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
        }
        Ok(Self::build(node_count, edges))
    }

    /// Drops self-loops and duplicate edges instead of failing.
    pub fn from_edges_lossy(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut seen = HashSet::new();
        let kept: Vec<_> = edges
            .into_iter()
            .filter(|&(u, v)| u != v && u < node_count && v < node_count && seen.insert((u, v)))
            .collect();
        Self::build(node_count, kept)
    }

    pub fn empty(node_count: usize) -> Self {
        Self::build(node_count, Vec::new())
    }

    fn build(node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut in_edges = vec![Vec::new(); node_count];
        for (id, &(u, v)) in edges.iter().enumerate() {
            in_edges[v].push((u, id));
        }
        for list in &mut in_edges {
            list.sort_unstable();
        }
        Graph {
            node_count,
            edges,
            in_edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// In-neighbors of `v` paired with the connecting edge id.
    pub fn in_edges(&self, v: usize) -> &[(usize, EdgeId)] {
        &self.in_edges[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_edges[v].len()
    }

    pub fn edge_id(&self, source: usize, target: usize) -> Option<EdgeId> {
        let list = self.in_edges.get(target)?;
        list.binary_search_by_key(&source, |&(s, _)| s)
            .ok()
            .map(|pos| list[pos].1)
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edge_id(source, target).is_some()
    }

    /// Complete directed graph without self-loops.
    pub fn complete(node_count: usize) -> Self {
        let edges = (0..node_count)
            .flat_map(|u| (0..node_count).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        Self::build(node_count, edges)
    }
}
