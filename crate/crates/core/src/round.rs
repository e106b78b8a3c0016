//! Component rounding, certificates and the end-to-end pipeline.
//!
//! Every component is rounded to the exact minimum of its candidate schemes,
//! scored by the component-local subsidy: for each agent touching the
//! component, the change in its cost (value) between the integral and the
//! fractional holdings of the component's items, clamped at zero and summed.
//! Because `(a + b)⁺ ≤ a⁺ + b⁺`, these local totals add up to an upper bound
//! on the subsidy of the assembled allocation.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Signed, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::fbta::{fractional_items, run_fbta, AllocationTrace, DegeneratePolicy, FbtaError};
use crate::graph::{build_graph, find_atom_paths, trees, Edge, GraphError, ItemSharingGraph, Tree};
use crate::ido::{lift_allocation, reduce_to_ido, RankProfile};
use crate::model::{
    compute_subsidies, format_rational, positive_part, ratio, require_valid,
    FractionalAllocation, Instance, IntegralAllocation, Kind, ModelError, Rational, SubsidyVector,
};
use crate::split::{atom_path_split, simple_split, Component, ExpandedAtomPath, SplitError};

/// `(item, agent)` pairs ordered by item.
pub type Assignment = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoundError {
    #[error("item {item} assigned to agent {agent}, who holds none of it")]
    NotSharer { item: usize, agent: usize },
    #[error("item {item} assigned twice")]
    DuplicateItem { item: usize },
    #[error("item {item} is not shared by exactly agents {a} and {b}")]
    NotAnEdge { item: usize, a: usize, b: usize },
    #[error("pair edges do not meet at agent {middle} with two distinct items")]
    BadPair { middle: usize },
    #[error("atom-path of length {0} is too short")]
    ShortPath(usize),
    #[error("{h} attached edges on an atom-path of length {k}")]
    TooManyAttached { k: usize, h: usize },
    #[error("attached edge on item {item} does not fit the atom-path")]
    BadAttachment { item: usize },
    #[error("a recursive tree cannot be rounded as a single component")]
    Unsplit,
    #[error("fractional item {item} left unassigned")]
    Unassigned { item: usize },
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fbta(#[from] FbtaError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Round(#[from] RoundError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairScheme {
    /// `e1` to agent 1, `e2` to the middle agent.
    LL,
    /// `e1` to the middle agent, `e2` to agent 3.
    RR,
    /// `e1` to agent 1, `e2` to agent 3.
    LR,
    /// Both items to the middle agent.
    RL,
}

impl fmt::Display for PairScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairScheme::LL => "LL",
            PairScheme::RR => "RR",
            PairScheme::LR => "LR",
            PairScheme::RL => "RL",
        })
    }
}

/// Which bound argument covers an expanded atom-path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EapCase {
    /// Every path agent has an attached edge.
    Full,
    /// Exactly one path agent has none.
    OneFree,
    /// Few enough attached edges for plain threshold placement.
    Sparse,
    /// Short paths with two free agents.
    TwoFree,
}

impl EapCase {
    pub fn classify(k: usize, h: usize) -> Self {
        if h == k + 1 {
            EapCase::Full
        } else if h == k {
            EapCase::OneFree
        } else if h * (k + 1) + 4 * k <= 2 * k * k {
            // h <= k (2 - 6 / (k + 1)), cleared of denominators.
            EapCase::Sparse
        } else {
            EapCase::TwoFree
        }
    }
}

impl fmt::Display for EapCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EapCase::Full => "h=k+1",
            EapCase::OneFree => "h=k",
            EapCase::Sparse => "threshold",
            EapCase::TwoFree => "h=k-1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheme {
    Threshold,
    Pair { scheme: PairScheme, alpha: Rational },
    ExpandedAtomPath { case: EapCase, placement: usize },
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Threshold => f.write_str("threshold"),
            Scheme::Pair { scheme, .. } => write!(f, "pair:{scheme}"),
            Scheme::ExpandedAtomPath { case, .. } => write!(f, "atom-path:{case}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRounding {
    pub component: Component,
    /// Every fractional item of the component.
    pub assignment: Assignment,
    pub local_subsidy: Rational,
    pub bound: Rational,
    pub scheme: Scheme,
}

impl ComponentRounding {
    pub fn holds(&self) -> bool {
        self.local_subsidy <= self.bound
    }
}

fn clamp(kind: Kind, delta: &Rational) -> Rational {
    match kind {
        Kind::Chores => positive_part(delta),
        Kind::Goods => positive_part(&-delta),
    }
}

fn deltas(
    inst: &Instance,
    x: &FractionalAllocation,
    assignment: &[(usize, usize)],
) -> Result<BTreeMap<usize, Rational>, RoundError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut delta: BTreeMap<usize, Rational> = BTreeMap::new();
    for &(item, agent) in assignment {
        if !seen.insert(item) {
            return Err(RoundError::DuplicateItem { item });
        }
        if agent >= x.n() || !x.get(agent, item).is_positive() {
            return Err(RoundError::NotSharer { item, agent });
        }
        for i in x.sharers(item) {
            let owned = if i == agent { Rational::one() } else { Rational::zero() };
            *delta.entry(i).or_insert_with(Rational::zero) += (owned - x.get(i, item)) * inst.cost(i, item);
        }
    }
    Ok(delta)
}

/// Sum over touched agents of the clamped change in cost (chores) or the
/// clamped loss in value (goods) caused by rounding the listed items.
pub fn local_subsidy(
    inst: &Instance,
    x: &FractionalAllocation,
    assignment: &[(usize, usize)],
) -> Result<Rational, RoundError> {
    Ok(deltas(inst, x, assignment)?
        .values()
        .map(|d| clamp(inst.kind(), d))
        .sum())
}

fn check_edge_item(x: &FractionalAllocation, edge: Edge) -> Result<(), RoundError> {
    let mut ends = [edge.from, edge.to];
    ends.sort_unstable();
    if x.sharers(edge.item) != ends {
        return Err(RoundError::NotAnEdge {
            item: edge.item,
            a: ends[0],
            b: ends[1],
        });
    }
    Ok(())
}

/// Larger fraction wins; a tie goes to the smaller agent.
fn threshold_owner(x: &FractionalAllocation, item: usize, candidates: &[usize]) -> usize {
    let mut best = candidates[0];
    for &i in &candidates[1..] {
        let better = x.get(i, item) > x.get(best, item)
            || (x.get(i, item) == x.get(best, item) && i < best);
        if better {
            best = i;
        }
    }
    best
}

pub fn round_single_edge(
    inst: &Instance,
    x: &FractionalAllocation,
    edge: Edge,
) -> Result<ComponentRounding, RoundError> {
    check_edge_item(x, edge)?;
    let agent = threshold_owner(x, edge.item, &[edge.from, edge.to]);
    let assignment = vec![(edge.item, agent)];
    Ok(ComponentRounding {
        local_subsidy: local_subsidy(inst, x, &assignment)?,
        component: Component::SingleEdge(edge),
        assignment,
        bound: ratio(1, 2),
        scheme: Scheme::Threshold,
    })
}

/// A pair laid out as agent 1 -e1- agent 2 -e2- agent 3, where agent 2 is the
/// middle and `a1 = c2(e1) ≥ a2 = c2(e2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLayout {
    pub agents: [usize; 3],
    pub items: [usize; 2],
    pub a1: Rational,
    pub a2: Rational,
}

impl PairLayout {
    /// `a2 / a1`, or 1 when the middle agent values both items at zero.
    pub fn alpha(&self) -> Rational {
        if self.a1.is_zero() {
            Rational::one()
        } else {
            &self.a2 / &self.a1
        }
    }

    /// Middle agent's fractions of `e1` and `e2`.
    pub fn middle_shares(&self, x: &FractionalAllocation) -> (Rational, Rational) {
        (
            x.get(self.agents[1], self.items[0]).clone(),
            x.get(self.agents[1], self.items[1]).clone(),
        )
    }

    fn assignment(&self, scheme: PairScheme) -> Vec<(usize, usize)> {
        let [one, mid, three] = self.agents;
        let (o1, o2) = match scheme {
            PairScheme::LL => (one, mid),
            PairScheme::RR => (mid, three),
            PairScheme::LR => (one, three),
            PairScheme::RL => (mid, mid),
        };
        let mut out = vec![(self.items[0], o1), (self.items[1], o2)];
        out.sort_unstable();
        out
    }
}

pub fn pair_layout(
    inst: &Instance,
    x: &FractionalAllocation,
    middle: usize,
    edges: [Edge; 2],
) -> Result<PairLayout, RoundError> {
    let other = |e: Edge| if e.from == middle { Some(e.to) } else if e.to == middle { Some(e.from) } else { None };
    let (Some(p), Some(q)) = (other(edges[0]), other(edges[1])) else {
        return Err(RoundError::BadPair { middle });
    };
    if edges[0].item == edges[1].item || p == q {
        return Err(RoundError::BadPair { middle });
    }
    check_edge_item(x, edges[0])?;
    check_edge_item(x, edges[1])?;
    let (c0, c1) = (inst.cost(middle, edges[0].item), inst.cost(middle, edges[1].item));
    let swap = c1 > c0 || (c1 == c0 && edges[1].item < edges[0].item);
    let (first, second, one, three) = if swap {
        (edges[1], edges[0], q, p)
    } else {
        (edges[0], edges[1], p, q)
    };
    Ok(PairLayout {
        agents: [one, middle, three],
        items: [first.item, second.item],
        a1: inst.cost(middle, first.item).clone(),
        a2: inst.cost(middle, second.item).clone(),
    })
}

/// Upper bounds on the four pair schemes in the order LL, RR, LR, RL, given
/// the middle agent's shares `u1`, `u2` and `alpha = a2 / a1`.
///
/// For goods the bounds are the chores bounds of the mirrored layout with
/// `y = 1 - u`, which is what the per-agent accounting yields.
pub fn pair_table_bounds(kind: Kind, u1: &Rational, u2: &Rational, alpha: &Rational) -> [Rational; 4] {
    let one = Rational::one();
    match kind {
        Kind::Chores => {
            let (y1, y2) = (u1, u2);
            [
                y1 + positive_part(&((&one - y2) * alpha - y1)),
                y2 + positive_part(&((&one - y1) - y2 * alpha)),
                y1 + y2,
                (&one - y1) + (&one - y2) * alpha,
            ]
        }
        Kind::Goods => {
            let (w1, w2) = (&one - u1, &one - u2);
            [
                &w2 + positive_part(&(u1 - &w2 * alpha)),
                &w1 + positive_part(&(u2 * alpha - &w1)),
                u1 + u2 * alpha,
                &w1 + &w2,
            ]
        }
    }
}

pub fn round_pair(
    inst: &Instance,
    x: &FractionalAllocation,
    middle: usize,
    edges: [Edge; 2],
) -> Result<ComponentRounding, RoundError> {
    let layout = pair_layout(inst, x, middle, edges)?;
    let mut best: Option<(Rational, Vec<usize>, PairScheme, Assignment)> = None;
    for scheme in [PairScheme::LL, PairScheme::RR, PairScheme::LR, PairScheme::RL] {
        let assignment = layout.assignment(scheme);
        let value = local_subsidy(inst, x, &assignment)?;
        let owners: Vec<usize> = assignment.iter().map(|&(_, a)| a).collect();
        let better = best
            .as_ref()
            .is_none_or(|(v, o, _, _)| value < *v || (value == *v && owners < *o));
        if better {
            best = Some((value, owners, scheme, assignment));
        }
    }
    let (value, _, scheme, assignment) = best.expect("four candidates");
    Ok(ComponentRounding {
        component: Component::Pair { middle, edges },
        assignment,
        local_subsidy: value,
        bound: ratio(2, 3),
        scheme: Scheme::Pair {
            scheme,
            alpha: layout.alpha(),
        },
    })
}

fn check_expanded(x: &FractionalAllocation, eap: &ExpandedAtomPath) -> Result<(), RoundError> {
    let (k, h) = (eap.k(), eap.h());
    if k < 2 {
        return Err(RoundError::ShortPath(k));
    }
    if h > k + 1 || eap.attached.len() != k + 1 {
        return Err(RoundError::TooManyAttached { k, h });
    }
    let mut path = eap.base.agents.clone();
    path.sort_unstable();
    if x.sharers(eap.base.item) != path {
        return Err(RoundError::BadAttachment { item: eap.base.item });
    }
    let mut items = vec![eap.base.item];
    for (&agent, edge) in eap.base.agents.iter().zip(&eap.attached) {
        let Some(edge) = *edge else { continue };
        let far = if edge.from == agent { edge.to } else { edge.from };
        let touches = edge.from == agent || edge.to == agent;
        if !touches || eap.base.contains(far) || items.contains(&edge.item) {
            return Err(RoundError::BadAttachment { item: edge.item });
        }
        items.push(edge.item);
        check_edge_item(x, edge)?;
    }
    Ok(())
}

/// Tries every placement of the shattered item on a path agent. For a fixed
/// placement each attached edge involves its own pair of agents, so its two
/// options are settled independently.
pub fn round_expanded_atom_path(
    inst: &Instance,
    x: &FractionalAllocation,
    eap: &ExpandedAtomPath,
) -> Result<ComponentRounding, RoundError> {
    check_expanded(x, eap)?;
    let kind = inst.kind();
    let e0 = eap.base.item;
    let mut best: Option<(Rational, Assignment, usize)> = None;
    for &placed in &eap.base.agents {
        let mut total = Rational::zero();
        let mut assignment = vec![(e0, placed)];
        for (&agent, attached) in eap.base.agents.iter().zip(&eap.attached) {
            let owned = if agent == placed { Rational::one() } else { Rational::zero() };
            let base = (owned - x.get(agent, e0)) * inst.cost(agent, e0);
            let Some(edge) = attached else {
                total += clamp(kind, &base);
                continue;
            };
            let far = if edge.from == agent { edge.to } else { edge.from };
            let f = edge.item;
            let to_path = clamp(kind, &(&base + (Rational::one() - x.get(agent, f)) * inst.cost(agent, f)))
                + clamp(kind, &(-x.get(far, f) * inst.cost(far, f)));
            let to_far = clamp(kind, &(&base - x.get(agent, f) * inst.cost(agent, f)))
                + clamp(kind, &((Rational::one() - x.get(far, f)) * inst.cost(far, f)));
            let path_wins = to_path < to_far || (to_path == to_far && agent < far);
            if path_wins {
                total += to_path;
                assignment.push((f, agent));
            } else {
                total += to_far;
                assignment.push((f, far));
            }
        }
        assignment.sort_unstable();
        let better = best.as_ref().is_none_or(|(v, a, _)| {
            total < *v || (total == *v && assignment.iter().map(|p| p.1).lt(a.iter().map(|p| p.1)))
        });
        if better {
            best = Some((total, assignment, placed));
        }
    }
    let (value, assignment, placement) = best.expect("at least three path agents");
    debug_assert_eq!(local_subsidy(inst, x, &assignment).ok(), Some(value.clone()));
    let (k, h) = (eap.k(), eap.h());
    Ok(ComponentRounding {
        component: Component::ExpandedAtomPath(eap.clone()),
        assignment,
        local_subsidy: value,
        bound: ratio((k + h) as i64, 3),
        scheme: Scheme::ExpandedAtomPath {
            case: EapCase::classify(k, h),
            placement,
        },
    })
}

/// Biased threshold rule for chores: the attached edge of path agent `i` goes
/// to `i` when `y - x_i ≤ 1 - y`, where `x_i` is `i`'s share of the shattered
/// item and `y` the attached agent's share of the edge item.
pub fn biased_threshold_chores(x_i: &Rational, y: &Rational) -> bool {
    y - x_i <= Rational::one() - y
}

/// Biased threshold rule for goods: the attached edge goes to the attached
/// agent when `x_i·α + (1 - y)·v < (x_i·α - y·v)⁺ + y`, with `α = v_i(e0)` and
/// `v = v_i(e_i)`. Returns true when the edge stays with path agent `i`.
pub fn biased_threshold_goods(x_i: &Rational, alpha: &Rational, y: &Rational, v: &Rational) -> bool {
    let xa = x_i * alpha;
    let to_far = &xa + (Rational::one() - y) * v;
    let to_path = positive_part(&(&xa - y * v)) + y;
    to_far >= to_path
}

/// Rounding of one tree: the components cut directly from it plus the
/// recursively rounded good subtrees.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRounding {
    pub tree: Tree,
    pub has_atom_path: bool,
    pub components: Vec<ComponentRounding>,
    pub subtrees: Vec<TreeRounding>,
}

impl TreeRounding {
    pub fn bound(&self) -> Rational {
        tree_bound(self.tree.size(), self.has_atom_path)
    }

    pub fn all_components(&self) -> Vec<&ComponentRounding> {
        let mut out: Vec<&ComponentRounding> = self.components.iter().collect();
        for sub in &self.subtrees {
            out.extend(sub.all_components());
        }
        out
    }

    pub fn local_subsidy(&self) -> Rational {
        self.all_components().iter().map(|c| &c.local_subsidy).sum()
    }

    fn collect_violations(&self, out: &mut Vec<String>) {
        let root = self.tree.root;
        for c in &self.components {
            if !c.holds() {
                out.push(format!(
                    "component {} in tree rooted at {root}: {} > {}",
                    c.scheme,
                    format_rational(&c.local_subsidy),
                    format_rational(&c.bound)
                ));
            }
        }
        let parts: Rational = self.components.iter().map(|c| &c.bound).sum::<Rational>()
            + self.subtrees.iter().map(TreeRounding::bound).sum::<Rational>();
        if parts > self.bound() || self.local_subsidy() > self.bound() {
            out.push(format!(
                "tree rooted at {root}: local {} and parts {} against bound {}",
                format_rational(&self.local_subsidy()),
                format_rational(&parts),
                format_rational(&self.bound())
            ));
        }
        for sub in &self.subtrees {
            sub.collect_violations(out);
        }
    }
}

/// `z/3` for trees with an atom-path or even size, `z/3 + 1/6` otherwise.
pub fn tree_bound(z: usize, has_atom_path: bool) -> Rational {
    let third = ratio(z as i64, 3);
    if has_atom_path || z.is_multiple_of(2) {
        third
    } else {
        third + ratio(1, 6)
    }
}

pub fn round_tree(inst: &Instance, x: &FractionalAllocation, tree: &Tree) -> Result<TreeRounding, RoundError> {
    let has_atom_path = !find_atom_paths(tree)?.is_empty();
    let mut out = TreeRounding {
        tree: tree.clone(),
        has_atom_path,
        components: Vec::new(),
        subtrees: Vec::new(),
    };
    if tree.size() == 0 {
        return Ok(out);
    }
    if has_atom_path {
        let (eap, good) = atom_path_split(tree)?;
        out.components.push(round_expanded_atom_path(inst, x, &eap)?);
        for sub in &good {
            out.subtrees.push(round_tree(inst, x, sub)?);
        }
    } else {
        for part in simple_split(tree)? {
            out.components.push(round_component(inst, x, &part)?);
        }
    }
    Ok(out)
}

pub fn round_component(
    inst: &Instance,
    x: &FractionalAllocation,
    component: &Component,
) -> Result<ComponentRounding, RoundError> {
    match component {
        Component::SingleEdge(e) => round_single_edge(inst, x, *e),
        Component::Pair { middle, edges } => round_pair(inst, x, *middle, *edges),
        Component::ExpandedAtomPath(eap) => round_expanded_atom_path(inst, x, eap),
        Component::RecursiveTree(_) => Err(RoundError::Unsplit),
    }
}

/// Threshold rounding of one shattered item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRounding {
    pub item: usize,
    pub agent: usize,
    pub sharers: Vec<usize>,
    pub local_subsidy: Rational,
    /// `(|sharers| - 1) / 2`.
    pub bound: Rational,
}

fn baseline_items(inst: &Instance, x: &FractionalAllocation) -> Result<Vec<ItemRounding>, RoundError> {
    fractional_items(x)
        .into_iter()
        .map(|(item, sharers)| {
            let agent = threshold_owner(x, item, &sharers);
            Ok(ItemRounding {
                item,
                agent,
                local_subsidy: local_subsidy(inst, x, &[(item, agent)])?,
                bound: ratio(sharers.len() as i64 - 1, 2),
                sharers,
            })
        })
        .collect()
}

fn owners_with(x: &FractionalAllocation, assigned: &BTreeMap<usize, usize>) -> Result<IntegralAllocation, RoundError> {
    let owner = (0..x.m())
        .map(|item| {
            let sharers = x.sharers(item);
            match (assigned.get(&item), sharers.as_slice()) {
                (Some(&a), _) => Ok(a),
                (None, [only]) => Ok(*only),
                _ => Err(RoundError::Unassigned { item }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntegralAllocation::new(owner))
}

/// Every shattered item to its largest holder; whole items stay put.
pub fn round_baseline(
    inst: &Instance,
    x: &FractionalAllocation,
) -> Result<(IntegralAllocation, SubsidyVector), RoundError> {
    let assigned = baseline_items(inst, x)?.into_iter().map(|r| (r.item, r.agent)).collect();
    let alloc = owners_with(x, &assigned)?;
    let subsidies = compute_subsidies(inst, &alloc).expect("owners come from the same instance");
    Ok((alloc, subsidies))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    TreeSplitting,
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::TreeSplitting => "tree-splitting",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingCertificate {
    pub kind: Kind,
    pub n: usize,
    pub method: Method,
    /// Tree roundings; empty for the baseline.
    pub trees: Vec<TreeRounding>,
    /// Per-item roundings; used by the baseline only.
    pub items: Vec<ItemRounding>,
    pub forest_edges: usize,
    pub has_shattered_item: bool,
    /// Subsidy of the lifted allocation.
    pub total_subsidy: Rational,
    /// Subsidy of the rounded allocation on the reduced instance.
    pub ido_subsidy: Rational,
    pub global_bound: Rational,
    /// `(n - 1)/3`, certified when the forest is not a spanning tree or has a
    /// shattered item.
    pub strong_bound: Option<Rational>,
}

impl RoundingCertificate {
    pub fn components(&self) -> Vec<&ComponentRounding> {
        self.trees.iter().flat_map(TreeRounding::all_components).collect()
    }

    pub fn local_sum(&self) -> Rational {
        match self.method {
            Method::TreeSplitting => self.components().iter().map(|c| &c.local_subsidy).sum(),
            Method::Baseline => self.items.iter().map(|r| &r.local_subsidy).sum(),
        }
    }

    pub fn bound_sum(&self) -> Rational {
        match self.method {
            Method::TreeSplitting => self.trees.iter().map(TreeRounding::bound).sum(),
            Method::Baseline => self.items.iter().map(|r| &r.bound).sum(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.trees {
            t.collect_violations(&mut out);
        }
        for r in &self.items {
            if r.local_subsidy > r.bound {
                out.push(format!(
                    "item {}: {} > {}",
                    r.item,
                    format_rational(&r.local_subsidy),
                    format_rational(&r.bound)
                ));
            }
        }
        let chain = [
            ("lifted subsidy", self.total_subsidy.clone()),
            ("reduced subsidy", self.ido_subsidy.clone()),
            ("local sum", self.local_sum()),
            ("bound sum", self.bound_sum()),
            ("global bound", self.global_bound.clone()),
        ];
        for w in chain.windows(2) {
            if w[0].1 > w[1].1 {
                out.push(format!(
                    "{} {} exceeds {} {}",
                    w[0].0,
                    format_rational(&w[0].1),
                    w[1].0,
                    format_rational(&w[1].1)
                ));
            }
        }
        if let Some(strong) = &self.strong_bound {
            if self.total_subsidy > *strong {
                out.push(format!(
                    "lifted subsidy {} exceeds {}",
                    format_rational(&self.total_subsidy),
                    format_rational(strong)
                ));
            }
        }
        out
    }

    pub fn holds(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn scheme_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = match self.method {
            Method::TreeSplitting => self.components().iter().map(|c| c.scheme.to_string()).collect(),
            Method::Baseline => vec!["threshold".into(); self.items.len()],
        };
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn to_json(&self) -> Value {
        let q = |r: &Rational| Value::String(format_rational(r));
        let component = |c: &ComponentRounding| {
            let mut v = json!({
                "scheme": c.scheme.to_string(),
                "edges": c.component.edges().iter().map(|e| json!([e.from, e.to, e.item])).collect::<Vec<_>>(),
                "assignment": c.assignment.iter().map(|&(e, a)| json!([e, a])).collect::<Vec<_>>(),
                "local_subsidy": q(&c.local_subsidy),
                "bound": q(&c.bound),
            });
            match &c.scheme {
                Scheme::Pair { alpha, .. } => v["alpha"] = q(alpha),
                Scheme::ExpandedAtomPath { placement, .. } => v["placement"] = json!(placement),
                Scheme::Threshold => {}
            }
            v
        };
        fn tree_json(t: &TreeRounding, component: &dyn Fn(&ComponentRounding) -> Value) -> Value {
            json!({
                "root": t.tree.root,
                "size": t.tree.size(),
                "atom_path": t.has_atom_path,
                "local_subsidy": format_rational(&t.local_subsidy()),
                "bound": format_rational(&t.bound()),
                "components": t.components.iter().map(component).collect::<Vec<_>>(),
                "subtrees": t.subtrees.iter().map(|s| tree_json(s, component)).collect::<Vec<_>>(),
            })
        }
        let violations = self.violations();
        json!({
            "kind": self.kind.to_string(),
            "agents": self.n,
            "method": self.method.to_string(),
            "forest_edges": self.forest_edges,
            "shattered_item": self.has_shattered_item,
            "trees": self.trees.iter().filter(|t| t.tree.size() > 0).map(|t| tree_json(t, &component)).collect::<Vec<_>>(),
            "items": self.items.iter().map(|r| json!({
                "item": r.item,
                "agent": r.agent,
                "sharers": r.sharers,
                "local_subsidy": q(&r.local_subsidy),
                "bound": q(&r.bound),
            })).collect::<Vec<_>>(),
            "schemes": self.scheme_labels(),
            "total_subsidy": q(&self.total_subsidy),
            "reduced_subsidy": q(&self.ido_subsidy),
            "local_sum": q(&self.local_sum()),
            "bound_sum": q(&self.bound_sum()),
            "global_bound": q(&self.global_bound),
            "strong_bound": self.strong_bound.as_ref().map(q),
            "holds": violations.is_empty(),
            "violations": violations,
        })
    }
}

/// `n/3 - 1/6` for chores, `n/3` for goods, `(n - 1)/2` for the baseline.
pub fn global_bound(kind: Kind, n: usize, method: Method) -> Rational {
    let n = n as i64;
    match (method, kind) {
        (Method::Baseline, _) => ratio(n - 1, 2),
        (_, Kind::Chores) => ratio(n, 3) - ratio(1, 6),
        (_, Kind::Goods) => ratio(n, 3),
    }
}

/// Everything the pipeline produced, intermediate stages included.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub allocation: IntegralAllocation,
    pub subsidies: SubsidyVector,
    pub certificate: RoundingCertificate,
    pub reduced: Instance,
    pub profile: RankProfile,
    pub fractional: FractionalAllocation,
    pub trace: AllocationTrace,
    pub graph: ItemSharingGraph,
    pub reduced_allocation: IntegralAllocation,
}

pub fn allocate_with_subsidy(inst: &Instance) -> Result<Outcome, PipelineError> {
    allocate(inst, Method::TreeSplitting)
}

pub fn allocate(inst: &Instance, method: Method) -> Result<Outcome, PipelineError> {
    require_valid(inst)?;
    let (reduced, profile) = reduce_to_ido(inst);
    let (x, trace) = run_fbta(&reduced, DegeneratePolicy::Exclude)?;
    let graph = build_graph(&trace)?;
    let forest = trees(&graph);
    let has_shattered_item = forest
        .iter()
        .map(find_atom_paths)
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .any(|p| !p.is_empty());

    let (tree_roundings, items, assigned) = match method {
        Method::TreeSplitting => {
            let rounded = forest
                .par_iter()
                .map(|t| round_tree(&reduced, &x, t))
                .collect::<Result<Vec<_>, _>>()?;
            let assigned: BTreeMap<usize, usize> = rounded
                .iter()
                .flat_map(TreeRounding::all_components)
                .flat_map(|c| c.assignment.iter().copied())
                .collect();
            (rounded, Vec::new(), assigned)
        }
        Method::Baseline => {
            let items = baseline_items(&reduced, &x)?;
            let assigned = items.iter().map(|r| (r.item, r.agent)).collect();
            (Vec::new(), items, assigned)
        }
    };
    let reduced_allocation = owners_with(&x, &assigned)?;
    let ido_subsidy = compute_subsidies(&reduced, &reduced_allocation)?.total;
    let allocation = lift_allocation(inst, &profile, &reduced_allocation)?;
    let subsidies = compute_subsidies(inst, &allocation)?;

    let n = inst.n();
    let forest_edges = graph.edges().len();
    let strong = method == Method::TreeSplitting && (forest_edges + 1 < n || has_shattered_item);
    let certificate = RoundingCertificate {
        kind: inst.kind(),
        n,
        method,
        trees: tree_roundings,
        items,
        forest_edges,
        has_shattered_item,
        total_subsidy: subsidies.total.clone(),
        ido_subsidy,
        global_bound: global_bound(inst.kind(), n, method),
        strong_bound: strong.then(|| ratio(n as i64 - 1, 3)),
    };
    Ok(Outcome {
        allocation,
        subsidies,
        certificate,
        reduced,
        profile,
        fractional: x,
        trace,
        graph,
        reduced_allocation,
    })
}

/// Agent count, pipeline subsidy and global bound for one instance.
pub fn bench_row(inst: &Instance) -> Result<(usize, Rational, Rational), PipelineError> {
    let out = allocate_with_subsidy(inst)?;
    Ok((inst.n(), out.subsidies.total, out.certificate.global_bound))
}
