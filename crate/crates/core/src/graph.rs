//! Item-sharing graph: a directed forest over agents with an edge from each
//! agent to its successor, labelled by the item they share.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::fbta::AllocationTrace;
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("agent {0} has more than one outgoing edge")]
    DuplicateOutgoing(usize),
    #[error("edge {from} -> {to} references an agent outside 0..{n}")]
    AgentOutOfRange { from: usize, to: usize, n: usize },
    #[error("edge {0} -> {0} is a self-loop")]
    SelfLoop(usize),
    #[error("successor links starting at agent {0} form a cycle")]
    Cycle(usize),
    #[error("edge set is not connected")]
    Disconnected,
    #[error("edges carrying item {0} do not form a single directed path")]
    BrokenAtomPath(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSharingGraph {
    n: usize,
    edges: Vec<Edge>,
    out: Vec<Option<Edge>>,
}

impl ItemSharingGraph {
    pub fn from_edges(n: usize, mut edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut out = vec![None; n];
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(GraphError::AgentOutOfRange {
                    from: e.from,
                    to: e.to,
                    n,
                });
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
            if out[e.from].replace(*e).is_some() {
                return Err(GraphError::DuplicateOutgoing(e.from));
            }
        }
        // With out-degree at most one, a cycle shows up as a walk longer than n.
        for start in 0..n {
            let mut node = start;
            for _ in 0..=n {
                match out[node] {
                    Some(e) => node = e.to,
                    None => break,
                }
            }
            if out[node].is_some() {
                return Err(GraphError::Cycle(start));
            }
        }
        edges.sort();
        Ok(Self { n, edges, out })
    }

    pub fn from_trace(trace: &AllocationTrace) -> Result<Self, GraphError> {
        let edges = trace
            .successor
            .iter()
            .enumerate()
            .filter_map(|(from, s)| {
                s.map(|s| Edge {
                    from,
                    to: s.agent,
                    item: s.item,
                })
            })
            .collect();
        Self::from_edges(trace.successor.len(), edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edge(&self, agent: usize) -> Option<Edge> {
        self.out[agent]
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.out[i].is_none()).collect()
    }
}

pub fn build_graph(trace: &AllocationTrace) -> Result<ItemSharingGraph, GraphError> {
    ItemSharingGraph::from_trace(trace)
}

/// A connected in-tree: every node except the root has one outgoing edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub root: usize,
    /// Sorted node list.
    pub nodes: Vec<usize>,
    /// Sorted edge list.
    pub edges: Vec<Edge>,
}

impl Tree {
    pub fn singleton(node: usize) -> Self {
        Self {
            root: node,
            nodes: vec![node],
            edges: Vec::new(),
        }
    }

    /// Builds a tree from a connected edge set with out-degree at most one.
    pub fn from_edges(mut edges: Vec<Edge>) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::Disconnected);
        }
        edges.sort();
        let mut nodes = BTreeSet::new();
        let mut sources = BTreeSet::new();
        for e in &edges {
            nodes.insert(e.from);
            nodes.insert(e.to);
            if !sources.insert(e.from) {
                return Err(GraphError::DuplicateOutgoing(e.from));
            }
        }
        if nodes.len() != edges.len() + 1 {
            return Err(GraphError::Disconnected);
        }
        let root = *nodes
            .iter()
            .find(|v| !sources.contains(v))
            .ok_or(GraphError::Cycle(edges[0].from))?;
        let tree = Self {
            root,
            nodes: nodes.into_iter().collect(),
            edges,
        };
        // n - 1 edges, one sink and every other node reaching it means connected.
        for &v in &tree.nodes {
            let mut node = v;
            let mut steps = 0;
            while let Some(e) = tree.out_edge(node) {
                node = e.to;
                steps += 1;
                if steps > tree.edges.len() {
                    return Err(GraphError::Cycle(v));
                }
            }
            if node != root {
                return Err(GraphError::Disconnected);
            }
        }
        Ok(tree)
    }

    pub fn size(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edge(&self, node: usize) -> Option<Edge> {
        self.edges.iter().copied().find(|e| e.from == node)
    }

    /// Incoming edges of `node`, ordered by child index.
    pub fn in_edges(&self, node: usize) -> Vec<Edge> {
        self.edges.iter().copied().filter(|e| e.to == node).collect()
    }

    /// Edges touching `node` in either direction, ordered by item index.
    pub fn incident(&self, node: usize) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .edges
            .iter()
            .copied()
            .filter(|e| e.from == node || e.to == node)
            .collect();
        out.sort_by_key(|e| (e.item, e.from, e.to));
        out
    }

    pub fn depth(&self, node: usize) -> usize {
        let mut depth = 0;
        let mut v = node;
        while let Some(e) = self.out_edge(v) {
            v = e.to;
            depth += 1;
        }
        depth
    }

    pub fn items(&self) -> BTreeSet<usize> {
        self.edges.iter().map(|e| e.item).collect()
    }
}

/// Splits an edge set into connected pieces, each returned as a tree. The
/// pieces are ordered by their smallest edge.
pub fn edge_components(edges: &[Edge]) -> Vec<Tree> {
    let mut remaining: Vec<Edge> = edges.to_vec();
    remaining.sort();
    let mut out = Vec::new();
    while let Some(first) = remaining.first().copied() {
        let mut nodes: BTreeSet<usize> = [first.from, first.to].into_iter().collect();
        let mut taken = vec![first];
        remaining.remove(0);
        loop {
            let before = taken.len();
            remaining.retain(|e| {
                if nodes.contains(&e.from) || nodes.contains(&e.to) {
                    nodes.insert(e.from);
                    nodes.insert(e.to);
                    taken.push(*e);
                    false
                } else {
                    true
                }
            });
            if taken.len() == before {
                break;
            }
        }
        out.push(Tree::from_edges(taken).expect("a connected subset of a forest is a tree"));
    }
    out
}

/// Connected components of the forest, isolated agents included, ordered by
/// their smallest agent.
pub fn trees(g: &ItemSharingGraph) -> Vec<Tree> {
    let mut with_edges = edge_components(g.edges());
    let covered: BTreeSet<usize> = with_edges.iter().flat_map(|t| t.nodes.clone()).collect();
    with_edges.extend((0..g.n()).filter(|v| !covered.contains(v)).map(Tree::singleton));
    with_edges.sort_by_key(|t| t.nodes[0]);
    with_edges
}

/// All edges of one shattered item: a directed path along which the item was
/// handed from agent to agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomPath {
    pub item: usize,
    /// Agents in path order; each one's successor is the next.
    pub agents: Vec<usize>,
}

impl AtomPath {
    pub fn k(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.agents
            .windows(2)
            .map(|w| Edge {
                from: w[0],
                to: w[1],
                item: self.item,
            })
            .collect()
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.agents.contains(&agent)
    }
}

/// One atom-path per item carried by two or more edges, ordered by item.
pub fn find_atom_paths(tree: &Tree) -> Result<Vec<AtomPath>, GraphError> {
    let mut by_item: BTreeMap<usize, Vec<Edge>> = BTreeMap::new();
    for e in &tree.edges {
        by_item.entry(e.item).or_default().push(*e);
    }
    let mut paths = Vec::new();
    for (item, edges) in by_item {
        if edges.len() < 2 {
            continue;
        }
        let targets: BTreeSet<usize> = edges.iter().map(|e| e.to).collect();
        let starts: Vec<usize> = edges
            .iter()
            .map(|e| e.from)
            .filter(|v| !targets.contains(v))
            .collect();
        let [start] = starts[..] else {
            return Err(GraphError::BrokenAtomPath(item));
        };
        let mut agents = vec![start];
        let mut node = start;
        while let Some(e) = edges.iter().find(|e| e.from == node) {
            node = e.to;
            agents.push(node);
        }
        if agents.len() != edges.len() + 1 {
            return Err(GraphError::BrokenAtomPath(item));
        }
        paths.push(AtomPath { item, agents });
    }
    Ok(paths)
}

/// Graphviz rendering. Edges of shattered items are drawn in red.
pub fn to_dot(g: &ItemSharingGraph, inst: &Instance) -> String {
    let mut per_item: BTreeMap<usize, usize> = BTreeMap::new();
    for e in g.edges() {
        *per_item.entry(e.item).or_default() += 1;
    }
    let mut out = String::from("digraph item_sharing {\n");
    for v in 0..g.n() {
        let _ = writeln!(out, "  a{v} [label={:?}];", inst.agent_name(v));
    }
    for e in g.edges() {
        let shattered = per_item[&e.item] >= 2;
        let _ = writeln!(
            out,
            "  a{} -> a{} [label={:?}{}];",
            e.from,
            e.to,
            inst.item_name(e.item),
            if shattered { ", color=red" } else { "" }
        );
    }
    out.push_str("}\n");
    out
}
