//! Tree splitting.
//!
//! Trees without shattered items are cut into adjacent edge pairs plus at most
//! one single edge. Trees with an atom-path are cut into one expanded
//! atom-path and a set of good subtrees (each contains an atom-path or has an
//! even number of edges), which are split again by the caller.

use crate::graph::{edge_components, find_atom_paths, AtomPath, Edge, GraphError, Tree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("tree contains an atom-path on item {0}")]
    HasAtomPath(usize),
    #[error("tree contains no atom-path")]
    NoAtomPath,
    #[error("component has even size {0}")]
    EvenComponent(usize),
    #[error("agent {0} is not in the component")]
    NotInComponent(usize),
    #[error("no edge at agent {0} leaves an even remainder")]
    NoEvenSide(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// An atom-path plus at most one attached edge per path agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedAtomPath {
    pub base: AtomPath,
    /// Parallel to `base.agents`.
    pub attached: Vec<Option<Edge>>,
}

impl ExpandedAtomPath {
    pub fn k(&self) -> usize {
        self.base.k()
    }

    pub fn h(&self) -> usize {
        self.attached.iter().flatten().count()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = self.base.edges();
        out.extend(self.attached.iter().flatten());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Component {
    SingleEdge(Edge),
    /// Two edges meeting at `middle`.
    Pair { middle: usize, edges: [Edge; 2] },
    ExpandedAtomPath(ExpandedAtomPath),
    /// A good subtree that still has to be split.
    RecursiveTree(Tree),
}

impl Component {
    pub fn edges(&self) -> Vec<Edge> {
        match self {
            Component::SingleEdge(e) => vec![*e],
            Component::Pair { edges, .. } => edges.to_vec(),
            Component::ExpandedAtomPath(eap) => eap.edges(),
            Component::RecursiveTree(t) => t.edges.clone(),
        }
    }

    /// Distinct items carried by the component's edges, ascending.
    pub fn items(&self) -> Vec<usize> {
        let mut items: Vec<usize> = self.edges().iter().map(|e| e.item).collect();
        items.sort_unstable();
        items.dedup();
        items
    }
}

/// Repeatedly takes the deepest node `i` (ties: smaller index) with parent
/// `j`. If `j` has another child `l` the pair is `{e^i, e^l}`; otherwise it
/// is `{e^i, e^j}`, or the lone edge `e^i` when `j` is the root.
pub fn simple_split(tree: &Tree) -> Result<Vec<Component>, SplitError> {
    if let Some(path) = find_atom_paths(tree)?.first() {
        return Err(SplitError::HasAtomPath(path.item));
    }
    let mut edges = tree.edges.clone();
    let mut out = Vec::new();
    while !edges.is_empty() {
        let rest = Tree::from_edges(edges.clone())?;
        let deepest = rest
            .nodes
            .iter()
            .copied()
            .filter(|&v| v != rest.root)
            .max_by(|&a, &b| rest.depth(a).cmp(&rest.depth(b)).then(b.cmp(&a)))
            .expect("a non-empty tree has a non-root node");
        let up = rest.out_edge(deepest).expect("non-root");
        let parent = up.to;
        let sibling = rest
            .in_edges(parent)
            .into_iter()
            .filter(|e| e.from != deepest)
            .min_by_key(|e| e.from);
        let taken = if let Some(other) = sibling {
            Component::Pair {
                middle: parent,
                edges: [up, other],
            }
        } else if parent == rest.root {
            Component::SingleEdge(up)
        } else {
            let above = rest.out_edge(parent).expect("parent is not the root");
            Component::Pair {
                middle: parent,
                edges: [up, above],
            }
        };
        let used = taken.edges();
        edges.retain(|e| !used.contains(e));
        out.push(taken);
    }
    Ok(out)
}

/// Size of the piece containing `far` once `cut` is removed from `component`.
fn far_side_size(component: &Tree, cut: Edge, far: usize) -> usize {
    let rest: Vec<Edge> = component.edges.iter().copied().filter(|&e| e != cut).collect();
    edge_components(&rest)
        .into_iter()
        .find(|t| t.nodes.contains(&far))
        .map_or(0, |t| t.size())
}

/// Picks the edge at `agent` to hand to the atom-path: the one whose far side
/// has even size, smallest item first.
pub fn choose_attachment(component: &Tree, agent: usize) -> Result<Edge, SplitError> {
    if component.size().is_multiple_of(2) {
        return Err(SplitError::EvenComponent(component.size()));
    }
    if let Some(path) = find_atom_paths(component)?.first() {
        return Err(SplitError::HasAtomPath(path.item));
    }
    if !component.nodes.contains(&agent) {
        return Err(SplitError::NotInComponent(agent));
    }
    component
        .incident(agent)
        .into_iter()
        .find(|&e| {
            let far = if e.from == agent { e.to } else { e.from };
            far_side_size(component, e, far).is_multiple_of(2)
        })
        .ok_or(SplitError::NoEvenSide(agent))
}

/// Splits around the atom-path with the smallest item.
pub fn atom_path_split(tree: &Tree) -> Result<(ExpandedAtomPath, Vec<Tree>), SplitError> {
    let base = find_atom_paths(tree)?
        .into_iter()
        .next()
        .ok_or(SplitError::NoAtomPath)?;
    let path_edges = base.edges();
    let rest: Vec<Edge> = tree
        .edges
        .iter()
        .copied()
        .filter(|e| !path_edges.contains(e))
        .collect();
    let mut attached = vec![None; base.agents.len()];
    let mut good = Vec::new();
    for component in edge_components(&rest) {
        if component.size() % 2 == 0 || !find_atom_paths(&component)?.is_empty() {
            good.push(component);
            continue;
        }
        // The tree has no cycles, so a piece meets the path at exactly one agent.
        let (slot, &contact) = base
            .agents
            .iter()
            .enumerate()
            .find(|(_, a)| component.nodes.contains(a))
            .expect("every piece hangs off the path");
        let edge = choose_attachment(&component, contact)?;
        attached[slot] = Some(edge);
        let remainder: Vec<Edge> = component.edges.iter().copied().filter(|&e| e != edge).collect();
        good.extend(edge_components(&remainder));
    }
    good.sort_by_key(|t| t.edges[0]);
    Ok((ExpandedAtomPath { base, attached }, good))
}
