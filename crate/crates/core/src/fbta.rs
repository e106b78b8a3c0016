//! Fractional bid-and-take.
//!
//! Items are consumed in index order. Each item flows to the active agent with
//! the best ratio `c_i(e) / c_i(M)` (smallest for chores, largest for goods,
//! ties to the smaller agent index) until the item is used up or the agent
//! reaches its share, at which point the agent turns inactive and the rest of
//! the item goes to the next bidder.

use std::fmt::Write as _;

use num::{One, Signed, Zero};

use crate::ido::is_ido;
use crate::model::{
    format_rational, wprop_shares, FractionalAllocation, Instance, Kind, Rational,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FbtaError {
    #[error("expected a {expected} instance, got {found}")]
    WrongKind { expected: Kind, found: Kind },
    #[error("rows are not sorted in a common ascending item order")]
    NotIdo,
    #[error("agent {0} has zero total cost; exclude it before running")]
    DegenerateAgent(usize),
    #[error("items remain after every agent reached its share")]
    Exhausted,
}

/// How agents with an all-zero row are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Refuse to run.
    Reject,
    /// Leave them out of the bidding. Their share is zero, so an empty bundle
    /// suits them; they only absorb items nobody else can take.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub item: usize,
    pub agent: usize,
    pub fraction: Rational,
    pub inactivated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Successor {
    pub agent: usize,
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationTrace {
    pub events: Vec<TraceEvent>,
    /// `successor[i]`: the agent that took over the item `i` was eating when
    /// it turned inactive, with that item.
    pub successor: Vec<Option<Successor>>,
    /// The last item each agent received, if any.
    pub last_item: Vec<Option<usize>>,
}

impl AllocationTrace {
    fn new(n: usize) -> Self {
        Self {
            events: Vec::new(),
            successor: vec![None; n],
            last_item: vec![None; n],
        }
    }

    fn record(&mut self, item: usize, agent: usize, fraction: Rational, inactivated: bool) {
        self.last_item[agent] = Some(item);
        self.events.push(TraceEvent {
            item,
            agent,
            fraction,
            inactivated,
        });
    }

    /// Agents that received part of `item`, in the order they took it.
    pub fn sharers_in_order(&self, item: usize) -> Vec<usize> {
        self.events
            .iter()
            .filter(|ev| ev.item == item && ev.fraction.is_positive())
            .map(|ev| ev.agent)
            .collect()
    }

    /// One line per event: `item agent fraction flag`, 0-based indices.
    pub fn to_event_log(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                ev.item,
                ev.agent,
                format_rational(&ev.fraction),
                if ev.inactivated { "inactive" } else { "active" }
            );
        }
        out
    }
}

pub fn fbta_chores(inst: &Instance) -> Result<(FractionalAllocation, AllocationTrace), FbtaError> {
    expect_kind(inst, Kind::Chores)?;
    run_fbta(inst, DegeneratePolicy::Reject)
}

pub fn fbta_goods(inst: &Instance) -> Result<(FractionalAllocation, AllocationTrace), FbtaError> {
    expect_kind(inst, Kind::Goods)?;
    run_fbta(inst, DegeneratePolicy::Reject)
}

fn expect_kind(inst: &Instance, expected: Kind) -> Result<(), FbtaError> {
    if inst.kind() == expected {
        Ok(())
    } else {
        Err(FbtaError::WrongKind {
            expected,
            found: inst.kind(),
        })
    }
}

/// Runs the algorithm matching the instance kind.
pub fn run_fbta(
    inst: &Instance,
    policy: DegeneratePolicy,
) -> Result<(FractionalAllocation, AllocationTrace), FbtaError> {
    if !is_ido(inst) {
        return Err(FbtaError::NotIdo);
    }
    let n = inst.n();
    let degenerate: Vec<usize> = (0..n).filter(|&i| inst.is_degenerate(i)).collect();
    if policy == DegeneratePolicy::Reject {
        if let Some(&i) = degenerate.first() {
            return Err(FbtaError::DegenerateAgent(i));
        }
    }
    let goods = inst.kind() == Kind::Goods;
    let totals: Vec<Rational> = (0..n).map(|i| inst.total_cost(i)).collect();
    let shares = wprop_shares(inst);
    let mut active: Vec<bool> = (0..n).map(|i| !totals[i].is_zero()).collect();
    let mut held = vec![Rational::zero(); n];
    let mut x = FractionalAllocation::zeros(n, inst.m());
    let mut trace = AllocationTrace::new(n);

    let m = inst.m();
    let mut j = 0;
    let mut remaining = Rational::one();
    // Agent that just turned inactive partway through item `j`.
    let mut pending: Option<usize> = None;

    let give = |x: &mut FractionalAllocation,
                trace: &mut AllocationTrace,
                pending: &mut Option<usize>,
                item: usize,
                agent: usize,
                fraction: Rational,
                inactivated: bool| {
        if let Some(prev) = pending.take() {
            trace.successor[prev] = Some(Successor { agent, item });
        }
        x.add(agent, item, &fraction);
        trace.record(item, agent, fraction, inactivated);
    };

    while j < m {
        let bidders: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        if goods && bidders.len() <= 1 {
            // The last active agent takes everything that is left. With every
            // agent degenerate, the smallest index does.
            let agent = bidders.first().copied().unwrap_or(0);
            give(&mut x, &mut trace, &mut pending, j, agent, remaining, false);
            for item in j + 1..m {
                give(&mut x, &mut trace, &mut pending, item, agent, Rational::one(), false);
            }
            break;
        }
        let Some(agent) = select(inst, &bidders, &totals, j, goods) else {
            // Only reachable when excluded agents hold part of the weight:
            // they take the rest at no cost to themselves.
            let Some(&absorber) = degenerate.first() else {
                return Err(FbtaError::Exhausted);
            };
            give(&mut x, &mut trace, &mut pending, j, absorber, remaining, false);
            for item in j + 1..m {
                give(&mut x, &mut trace, &mut pending, item, absorber, Rational::one(), false);
            }
            break;
        };
        let c = inst.cost(agent, j);
        let after = &held[agent] + &remaining * c;
        if after > shares[agent] {
            // c > 0 here, otherwise `after` would equal `held`.
            let fraction = (&shares[agent] - &held[agent]) / c;
            remaining -= &fraction;
            held[agent] = shares[agent].clone();
            active[agent] = false;
            give(&mut x, &mut trace, &mut pending, j, agent, fraction, true);
            pending = Some(agent);
        } else {
            let exact = after == shares[agent];
            held[agent] = after;
            if exact {
                active[agent] = false;
            }
            let fraction = std::mem::replace(&mut remaining, Rational::one());
            give(&mut x, &mut trace, &mut pending, j, agent, fraction, exact);
            j += 1;
        }
    }
    Ok((x, trace))
}

fn select(
    inst: &Instance,
    bidders: &[usize],
    totals: &[Rational],
    item: usize,
    goods: bool,
) -> Option<usize> {
    let mut best: Option<(usize, Rational)> = None;
    for &i in bidders {
        let key = inst.cost(i, item) / &totals[i];
        let better = match &best {
            None => true,
            Some((_, k)) if goods => key > *k,
            Some((_, k)) => key < *k,
        };
        if better {
            best = Some((i, key));
        }
    }
    best.map(|(i, _)| i)
}

/// Items held by at least two agents, each with its sharers in index order.
pub fn fractional_items(alloc: &FractionalAllocation) -> Vec<(usize, Vec<usize>)> {
    (0..alloc.m())
        .map(|e| (e, alloc.sharers(e)))
        .filter(|(_, sharers)| sharers.len() >= 2)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::tests::{r, rows};
    use crate::model::{int, ratio};
    use proptest::prelude::*;

    pub(crate) fn istar() -> Instance {
        let weights = ["1/12", "1/12", "1/12", "1/6", "1/4", "1/3"]
            .iter()
            .map(|t| r(t))
            .collect();
        let costs = rows(&[
            &["0.7", "0.7", "0.7", "0.7", "1", "1"],
            &["0.8", "0.8", "0.8", "0.8", "0.8", "0.8"],
            &["0.7", "0.8", "0.8", "0.8", "0.8", "0.9"],
            &["0.8", "0.8", "0.8", "1", "1", "1"],
            &["1", "1", "1", "1", "1", "1"],
            &["0.8", "0.8", "0.8", "1", "1", "1"],
        ]);
        Instance::new(Kind::Chores, weights, costs).unwrap()
    }

    #[test]
    fn six_agent_example() {
        // Bids are c_i(e) / c_i(M) with totals 4.8, 4.8, 4.8, 5.4, 6, 5.4.
        // e1: agents 1 and 3 tie at 7/48; agent 1 fills at 4/7, agent 3 takes
        // the rest. e2: agent 4 bids 4/27 and takes it whole. e3: agent 4
        // fills with 1/8, agent 6 takes 7/8. e4: agents 2, 3, 5 tie at 1/6;
        // 2 fills at 1/2, 3 at 1/8, 5 takes 3/8. e5: agent 5 whole. e6:
        // agent 5 fills at 1/8, agent 6 takes 7/8.
        let (x, trace) = fbta_chores(&istar()).unwrap();
        let expected = rows(&[
            &["4/7", "0", "0", "0", "0", "0"],
            &["0", "0", "0", "1/2", "0", "0"],
            &["3/7", "0", "0", "1/8", "0", "0"],
            &["0", "1", "1/8", "0", "0", "0"],
            &["0", "0", "0", "3/8", "1", "1/8"],
            &["0", "0", "7/8", "0", "0", "7/8"],
        ]);
        assert_eq!(x.rows(), expected.as_slice());
        assert_eq!(
            trace.successor,
            vec![
                Some(Successor { agent: 2, item: 0 }),
                Some(Successor { agent: 2, item: 3 }),
                Some(Successor { agent: 4, item: 3 }),
                Some(Successor { agent: 5, item: 2 }),
                Some(Successor { agent: 5, item: 5 }),
                None,
            ]
        );
        assert_eq!(trace.sharers_in_order(3), vec![1, 2, 4]);
        assert_eq!(
            fractional_items(&x),
            vec![
                (0, vec![0, 2]),
                (2, vec![3, 5]),
                (3, vec![1, 2, 4]),
                (5, vec![4, 5]),
            ]
        );
        assert_eq!(x.agent_cost(&istar(), 5), r("1.575"));
    }

    #[test]
    fn exact_fit_leaves_no_fractional_item() {
        let inst = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["1", "1"], &["1", "1"]]),
        )
        .unwrap();
        let (x, trace) = fbta_chores(&inst).unwrap();
        assert_eq!(x.rows(), rows(&[&["1", "0"], &["0", "1"]]).as_slice());
        assert!(trace.successor.iter().all(Option::is_none));
        assert!(fractional_items(&x).is_empty());
        assert!(trace.events[0].inactivated);
    }

    #[test]
    fn single_agent_takes_everything() {
        for kind in [Kind::Chores, Kind::Goods] {
            let inst = Instance::new(kind, vec![int(1)], rows(&[&["0.1", "0.4", "0.4"]])).unwrap();
            let (x, _) = run_fbta(&inst, DegeneratePolicy::Reject).unwrap();
            assert_eq!(x.rows(), rows(&[&["1", "1", "1"]]).as_slice());
            assert_eq!(x.agent_cost(&inst, 0), inst.total_cost(0));
        }
    }

    #[test]
    fn goods_exact_fit() {
        let inst = Instance::new(
            Kind::Goods,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["1", "1"], &["1", "1"]]),
        )
        .unwrap();
        let (x, trace) = fbta_goods(&inst).unwrap();
        assert_eq!(x.rows(), rows(&[&["1", "0"], &["0", "1"]]).as_slice());
        assert!(fractional_items(&x).is_empty());
        assert!(trace.successor.iter().all(Option::is_none));
    }

    #[test]
    fn goods_by_hand() {
        // Shares are 3/8 and 9/8. Both keys on e1 are 1/3, so agent 1 bids
        // first; 3/4 of e1 fills its share and agent 2 takes the rest.
        let inst = Instance::new(
            Kind::Goods,
            vec![ratio(1, 4), ratio(3, 4)],
            rows(&[&["1/2", "1"], &["1/2", "1"]]),
        )
        .unwrap();
        let (x, trace) = fbta_goods(&inst).unwrap();
        assert_eq!(x.rows(), rows(&[&["3/4", "0"], &["1/4", "1"]]).as_slice());
        assert_eq!(
            trace.events,
            vec![
                TraceEvent { item: 0, agent: 0, fraction: ratio(3, 4), inactivated: true },
                TraceEvent { item: 0, agent: 1, fraction: ratio(1, 4), inactivated: false },
                TraceEvent { item: 1, agent: 1, fraction: int(1), inactivated: false },
            ]
        );
        assert_eq!(trace.successor[0], Some(Successor { agent: 1, item: 0 }));
        assert_eq!(trace.to_event_log(), "0 0 3/4 inactive\n0 1 1/4 active\n1 1 1 active\n");
    }

    #[test]
    fn one_item_chained_across_four_agents() {
        let inst = Instance::new(Kind::Chores, vec![ratio(1, 4); 4], rows(&[&["1"], &["1"], &["1"], &["1"]])).unwrap();
        let (x, trace) = fbta_chores(&inst).unwrap();
        assert_eq!(x.rows(), rows(&[&["1/4"], &["1/4"], &["1/4"], &["1/4"]]).as_slice());
        let chain: Vec<_> = trace.successor.iter().map(|s| s.map(|s| s.agent)).collect();
        assert_eq!(chain, vec![Some(1), Some(2), Some(3), None]);
    }

    #[test]
    fn guards() {
        let inst = istar();
        assert_eq!(
            fbta_goods(&inst).unwrap_err(),
            FbtaError::WrongKind { expected: Kind::Goods, found: Kind::Chores }
        );
        let unsorted = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["0.2", "0.5"], &["0.6", "0.3"]]),
        )
        .unwrap();
        assert_eq!(fbta_chores(&unsorted).unwrap_err(), FbtaError::NotIdo);
        let zero = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["0", "0"], &["1", "1"]]),
        )
        .unwrap();
        assert_eq!(fbta_chores(&zero).unwrap_err(), FbtaError::DegenerateAgent(0));
    }

    #[test]
    fn excluded_agent_absorbs_leftovers() {
        // Agent 2 has nothing to do; agent 1 stops at its share of 1 and the
        // second item falls to agent 2 at no cost.
        let inst = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["1", "1"], &["0", "0"]]),
        )
        .unwrap();
        let (x, trace) = run_fbta(&inst, DegeneratePolicy::Exclude).unwrap();
        assert_eq!(x.rows(), rows(&[&["1", "0"], &["0", "1"]]).as_slice());
        assert!(trace.successor.iter().all(Option::is_none));

        let uneven = Instance::new(
            Kind::Chores,
            vec![ratio(1, 3), ratio(2, 3)],
            rows(&[&["1", "1"], &["0", "0"]]),
        )
        .unwrap();
        let (x, trace) = run_fbta(&uneven, DegeneratePolicy::Exclude).unwrap();
        assert_eq!(x.rows(), rows(&[&["2/3", "0"], &["1/3", "1"]]).as_slice());
        assert_eq!(trace.successor[0], Some(Successor { agent: 1, item: 0 }));
    }

    pub(crate) fn ido_instance(kind: Kind) -> impl Strategy<Value = Instance> {
        (1usize..7, 1usize..9).prop_flat_map(move |(n, m)| {
            (
                proptest::collection::vec(1i64..=10, n),
                proptest::collection::vec(proptest::collection::vec(1i64..=10, m), n),
            )
                .prop_map(move |(w, c)| {
                    let total: i64 = w.iter().sum();
                    let weights = w.iter().map(|&wi| ratio(wi, total)).collect();
                    let costs = c
                        .into_iter()
                        .map(|mut row| {
                            row.sort_unstable();
                            row.into_iter().map(|q| ratio(q, 10)).collect()
                        })
                        .collect();
                    Instance::new(kind, weights, costs).unwrap()
                })
        })
    }

    fn check_invariants(inst: &Instance) -> Result<(), TestCaseError> {
        let (x, trace) = run_fbta(inst, DegeneratePolicy::Reject).unwrap();
        prop_assert!(x.is_complete());
        let shares = wprop_shares(inst);
        for (i, share) in shares.iter().enumerate() {
            let got = x.agent_cost(inst, i);
            match inst.kind() {
                Kind::Chores => prop_assert!(got <= *share),
                Kind::Goods => prop_assert!(got >= *share),
            }
            let inactivated = trace.events.iter().filter(|ev| ev.agent == i && ev.inactivated).count();
            prop_assert!(inactivated <= 1);
            if inactivated == 1 {
                prop_assert_eq!(&got, &shares[i]);
            }
            if let Some(s) = trace.successor[i] {
                prop_assert_eq!(trace.last_item[i], Some(s.item));
                prop_assert!(x.get(i, s.item).is_positive());
                prop_assert!(x.get(s.agent, s.item).is_positive());
            }
        }
        prop_assert!(fractional_items(&x).len() < inst.n().max(1));
        for e in 0..inst.m() {
            let total: Rational = trace.events.iter().filter(|ev| ev.item == e).map(|ev| ev.fraction.clone()).sum();
            prop_assert_eq!(total, int(1));
        }
        let again = run_fbta(inst, DegeneratePolicy::Reject).unwrap();
        prop_assert_eq!(again.1, trace);
        Ok(())
    }

    proptest! {
        #[test]
        fn chores_invariants(inst in ido_instance(Kind::Chores)) {
            check_invariants(&inst)?;
        }

        #[test]
        fn goods_invariants(inst in ido_instance(Kind::Goods)) {
            check_invariants(&inst)?;
        }
    }
}
