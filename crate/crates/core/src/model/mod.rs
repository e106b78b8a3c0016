//! Instances, allocations and subsidies.
//!
//! Agents and items are addressed by 0-based indices throughout the library.
//! Human-facing names default to `"1".."n"` for agents and `"e1".."em"` for
//! items.

mod io;
mod rational;

pub use io::{parse_instance, serialize_instance, InstanceParseError};
pub use rational::{
    format_decimal, format_rational, int, is_unit_interval, parse_rational, positive_part,
    ratio, sum, to_f64, Exact, ParseRationalError, Rational,
};

use std::fmt;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Chores,
    Goods,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Chores => "chores",
            Kind::Goods => "goods",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("weights have {weights} entries but the cost matrix has {rows} rows")]
    RowCount { weights: usize, rows: usize },
    #[error("cost row {row} has {found} entries, expected {expected}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{what} has {found} names, expected {expected}")]
    NameCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("agent {agent} out of range for {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("allocation covers {found} items, instance has {expected}")]
    AllocationLength { expected: usize, found: usize },
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
}

/// An allocation problem: agents with weights and an additive cost (or
/// value) matrix over indivisible items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    kind: Kind,
    weights: Vec<Rational>,
    costs: Vec<Vec<Rational>>,
    agent_names: Option<Vec<String>>,
    item_names: Option<Vec<String>>,
}

impl Instance {
    /// Builds an instance after checking dimensions only. Range and weight-sum
    /// constraints are reported by [`validate_instance`].
    pub fn new(
        kind: Kind,
        weights: Vec<Rational>,
        costs: Vec<Vec<Rational>>,
    ) -> Result<Self, ModelError> {
        if weights.len() != costs.len() {
            return Err(ModelError::RowCount {
                weights: weights.len(),
                rows: costs.len(),
            });
        }
        let m = costs.first().map_or(0, Vec::len);
        for (row, values) in costs.iter().enumerate() {
            if values.len() != m {
                return Err(ModelError::RowLength {
                    row,
                    expected: m,
                    found: values.len(),
                });
            }
        }
        Ok(Self {
            kind,
            weights,
            costs,
            agent_names: None,
            item_names: None,
        })
    }

    pub fn with_agent_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.n() {
            return Err(ModelError::NameCount {
                what: "agent_names",
                expected: self.n(),
                found: names.len(),
            });
        }
        self.agent_names = Some(names);
        Ok(self)
    }

    pub fn with_item_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.m() {
            return Err(ModelError::NameCount {
                what: "item_names",
                expected: self.m(),
                found: names.len(),
            });
        }
        self.item_names = Some(names);
        Ok(self)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn m(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weight(&self, agent: usize) -> &Rational {
        &self.weights[agent]
    }

    pub fn costs(&self) -> &[Vec<Rational>] {
        &self.costs
    }

    pub fn row(&self, agent: usize) -> &[Rational] {
        &self.costs[agent]
    }

    /// `c_i(e)` for chores, `v_i(e)` for goods.
    pub fn cost(&self, agent: usize, item: usize) -> &Rational {
        &self.costs[agent][item]
    }

    /// `c_i(M)`: the agent's cost (or value) for the whole item set.
    pub fn total_cost(&self, agent: usize) -> Rational {
        sum(&self.costs[agent])
    }

    pub fn bundle_cost(&self, agent: usize, items: impl IntoIterator<Item = usize>) -> Rational {
        items
            .into_iter()
            .fold(Rational::zero(), |acc, e| acc + &self.costs[agent][e])
    }

    pub fn is_degenerate(&self, agent: usize) -> bool {
        self.costs[agent].iter().all(Zero::is_zero)
    }

    pub fn agent_names(&self) -> Option<&[String]> {
        self.agent_names.as_deref()
    }

    pub fn item_names(&self) -> Option<&[String]> {
        self.item_names.as_deref()
    }

    pub fn agent_name(&self, agent: usize) -> String {
        match &self.agent_names {
            Some(names) => names[agent].clone(),
            None => (agent + 1).to_string(),
        }
    }

    pub fn item_name(&self, item: usize) -> String {
        match &self.item_names {
            Some(names) => names[item].clone(),
            None => format!("e{}", item + 1),
        }
    }

    /// Same agents and weights with a different cost matrix of equal shape.
    /// Item names are dropped because items are relabelled.
    pub(crate) fn with_costs(&self, costs: Vec<Vec<Rational>>) -> Self {
        debug_assert_eq!(costs.len(), self.n());
        Self {
            kind: self.kind,
            weights: self.weights.clone(),
            costs,
            agent_names: self.agent_names.clone(),
            item_names: None,
        }
    }

    pub fn check_agent(&self, agent: usize) -> Result<(), ModelError> {
        if agent < self.n() {
            Ok(())
        } else {
            Err(ModelError::AgentOutOfRange {
                agent,
                n: self.n(),
            })
        }
    }
}

/// `WPROP_i = w_i · c_i(M)`.
pub fn wprop_share(inst: &Instance, agent: usize) -> Result<Rational, ModelError> {
    inst.check_agent(agent)?;
    Ok(inst.weight(agent) * inst.total_cost(agent))
}

pub(crate) fn wprop_shares(inst: &Instance) -> Vec<Rational> {
    (0..inst.n())
        .map(|i| inst.weight(i) * inst.total_cost(i))
        .collect()
}

/// Integral allocation as an owner per item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntegralAllocation {
    pub owner: Vec<usize>,
}

impl IntegralAllocation {
    pub fn new(owner: Vec<usize>) -> Self {
        Self { owner }
    }

    pub fn bundle(&self, agent: usize) -> Vec<usize> {
        self.owner
            .iter()
            .enumerate()
            .filter(|&(_, &o)| o == agent)
            .map(|(e, _)| e)
            .collect()
    }

    pub fn bundle_cost(&self, inst: &Instance, agent: usize) -> Rational {
        inst.bundle_cost(agent, self.bundle(agent))
    }

    /// Checks that every item has an owner among the instance's agents.
    pub fn check(&self, inst: &Instance) -> Result<(), ModelError> {
        if self.owner.len() != inst.m() {
            return Err(ModelError::AllocationLength {
                expected: inst.m(),
                found: self.owner.len(),
            });
        }
        self.owner.iter().try_for_each(|&o| inst.check_agent(o))
    }
}

/// Fractional allocation matrix `x[i][e]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionalAllocation {
    x: Vec<Vec<Rational>>,
}

impl FractionalAllocation {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: vec![vec![Rational::zero(); m]; n],
        }
    }

    /// Wraps a matrix; rows must have equal length.
    pub fn from_rows(x: Vec<Vec<Rational>>) -> Self {
        debug_assert!(x.windows(2).all(|w| w[0].len() == w[1].len()));
        Self { x }
    }

    pub fn from_integral(alloc: &IntegralAllocation, n: usize) -> Self {
        let mut out = Self::zeros(n, alloc.owner.len());
        for (e, &i) in alloc.owner.iter().enumerate() {
            out.x[i][e] = Rational::one();
        }
        out
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn get(&self, agent: usize, item: usize) -> &Rational {
        &self.x[agent][item]
    }

    pub(crate) fn add(&mut self, agent: usize, item: usize, amount: &Rational) {
        self.x[agent][item] += amount;
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.x
    }

    /// Agents holding a positive fraction of `item`, in index order.
    pub fn sharers(&self, item: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.x[i][item].is_positive())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        (0..self.m()).all(|e| {
            self.x.iter().all(|row| is_unit_interval(&row[e]))
                && self.x.iter().map(|row| &row[e]).sum::<Rational>() == Rational::one()
        })
    }

    /// `c_i(x_i) = Σ_e x_i(e)·c_i(e)`.
    pub fn agent_cost(&self, inst: &Instance, agent: usize) -> Rational {
        self.x[agent]
            .iter()
            .zip(inst.row(agent))
            .filter(|(f, _)| !f.is_zero())
            .fold(Rational::zero(), |acc, (f, c)| acc + f * c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsidyVector {
    pub per_agent: Vec<Rational>,
    pub total: Rational,
}

impl SubsidyVector {
    pub fn from_per_agent(per_agent: Vec<Rational>) -> Self {
        let total = sum(&per_agent);
        Self { per_agent, total }
    }
}

/// Minimum subsidies making `alloc` weighted-proportional: overshoot of the
/// share for chores, shortfall for goods, clamped at zero.
pub fn compute_subsidies(
    inst: &Instance,
    alloc: &IntegralAllocation,
) -> Result<SubsidyVector, ModelError> {
    alloc.check(inst)?;
    let mut held = vec![Rational::zero(); inst.n()];
    for (e, &i) in alloc.owner.iter().enumerate() {
        held[i] += inst.cost(i, e);
    }
    let per_agent = held
        .into_iter()
        .zip(wprop_shares(inst))
        .map(|(bundle, share)| match inst.kind() {
            Kind::Chores => positive_part(&(bundle - share)),
            Kind::Goods => positive_part(&(share - bundle)),
        })
        .collect();
    Ok(SubsidyVector::from_per_agent(per_agent))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoAgents,
    NonPositiveWeight { agent: usize },
    WeightSum { sum: Rational },
    CostOutOfRange { agent: usize, item: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAgents => write!(f, "instance has no agents"),
            Violation::NonPositiveWeight { agent } => {
                write!(f, "weight of agent {} is not positive", agent + 1)
            }
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum}, not 1"),
            Violation::CostOutOfRange { agent, item } => write!(
                f,
                "cost of item {} for agent {} is outside [0, 1]",
                item + 1,
                agent + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Agents whose whole-set cost (or value) is zero.
    pub degenerate_agents: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.violations {
            if !first {
                f.write_str("; ")?;
            }
            first = false;
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    if inst.n() == 0 {
        report.violations.push(Violation::NoAgents);
        return report;
    }
    for (agent, w) in inst.weights().iter().enumerate() {
        if !w.is_positive() {
            report
                .violations
                .push(Violation::NonPositiveWeight { agent });
        }
    }
    let total = sum(inst.weights());
    if !total.is_one() {
        report.violations.push(Violation::WeightSum { sum: total });
    }
    for agent in 0..inst.n() {
        for (item, c) in inst.row(agent).iter().enumerate() {
            if !is_unit_interval(c) {
                report
                    .violations
                    .push(Violation::CostOutOfRange { agent, item });
            }
        }
        if inst.is_degenerate(agent) {
            report.degenerate_agents.push(agent);
        }
    }
    report
}

pub(crate) fn require_valid(inst: &Instance) -> Result<ValidationReport, ModelError> {
    let report = validate_instance(inst);
    if report.is_valid() {
        Ok(report)
    } else {
        Err(ModelError::Invalid(report))
    }
}
