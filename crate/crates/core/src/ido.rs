//! Reduction to identical-ordering instances and the picking-sequence lift.
//!
//! The canonical item order is ascending: in an IDO instance every row is
//! non-decreasing in the item index, for chores and goods alike.

use crate::model::{IntegralAllocation, Instance, Kind, ModelError, Rational};

/// Per-agent ranking of the original items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankProfile {
    /// `ascending[i][k]` is the original item with the k-th smallest cost for
    /// agent `i` (0-based, ties by smaller item index).
    pub ascending: Vec<Vec<usize>>,
}

impl RankProfile {
    /// The k-th most costly item for agent `i` (0-based).
    pub fn sigma(&self, agent: usize, k: usize) -> usize {
        let row = &self.ascending[agent];
        row[row.len() - 1 - k]
    }

    pub fn is_identity(&self) -> bool {
        self.ascending
            .iter()
            .all(|row| row.iter().enumerate().all(|(k, &e)| k == e))
    }
}

pub fn is_ido(inst: &Instance) -> bool {
    inst.costs()
        .iter()
        .all(|row| row.windows(2).all(|w| w[0] <= w[1]))
}

fn ascending_order(row: &[Rational]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    // Stable sort keeps smaller indices first among equal costs.
    order.sort_by(|&a, &b| row[a].cmp(&row[b]));
    order
}

/// Sorts every row independently: `c'_i(e_k) = c_i(ascending[i][k])`.
pub fn reduce_to_ido(inst: &Instance) -> (Instance, RankProfile) {
    let ascending: Vec<Vec<usize>> = inst.costs().iter().map(|row| ascending_order(row)).collect();
    let costs = ascending
        .iter()
        .zip(inst.costs())
        .map(|(order, row)| order.iter().map(|&e| row[e].clone()).collect())
        .collect();
    (inst.with_costs(costs), RankProfile { ascending })
}

/// Turns an allocation of the reduced instance into one of the original
/// instance that is no worse for any agent.
///
/// Chores: walking the reduced items from cheapest to costliest, the owner of
/// each one takes its cheapest remaining original item. Goods: walking from the
/// most to the least valuable, the owner takes its most valuable remaining
/// item. Ties go to the smaller item index.
pub fn lift_allocation(
    inst: &Instance,
    profile: &RankProfile,
    ido_alloc: &IntegralAllocation,
) -> Result<IntegralAllocation, ModelError> {
    ido_alloc.check(inst)?;
    let m = inst.m();
    debug_assert!(profile.ascending.iter().all(|row| row.len() == m));
    let mut taken = vec![false; m];
    let mut owner = vec![0; m];
    let rounds: Vec<usize> = match inst.kind() {
        Kind::Chores => (0..m).collect(),
        Kind::Goods => (0..m).rev().collect(),
    };
    for k in rounds {
        let agent = ido_alloc.owner[k];
        let row = inst.row(agent);
        let better = |a: usize, b: usize| match inst.kind() {
            Kind::Chores => row[a] < row[b],
            Kind::Goods => row[a] > row[b],
        };
        let mut pick = None;
        for e in (0..m).filter(|&e| !taken[e]) {
            match pick {
                Some(p) if !better(e, p) => {}
                _ => pick = Some(e),
            }
        }
        let pick = pick.expect("one item remains per round");
        taken[pick] = true;
        owner[pick] = agent;
    }
    Ok(IntegralAllocation::new(owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{r, rows};
    use crate::model::{ratio, Kind};
    use proptest::prelude::*;

    fn two_agents(kind: Kind) -> Instance {
        Instance::new(
            kind,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["0.2", "0.5"], &["0.6", "0.3"]]),
        )
        .unwrap()
    }

    #[test]
    fn detects_identical_ordering() {
        assert!(!is_ido(&two_agents(Kind::Chores)));
        let sorted = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["0.2", "0.5"], &["0.3", "0.3"]]),
        )
        .unwrap();
        assert!(is_ido(&sorted));
    }

    #[test]
    fn sorts_each_row() {
        let (ido, profile) = reduce_to_ido(&two_agents(Kind::Chores));
        assert_eq!(ido.costs(), rows(&[&["0.2", "0.5"], &["0.3", "0.6"]]).as_slice());
        assert_eq!(profile.ascending, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(profile.sigma(1, 0), 0);
        assert!(is_ido(&ido));
        for i in 0..2 {
            assert_eq!(ido.total_cost(i), two_agents(Kind::Chores).total_cost(i));
        }
    }

    #[test]
    fn single_agent_row_is_sorted() {
        let inst = Instance::new(Kind::Chores, vec![r("1")], rows(&[&["0.9", "0.1", "0.5"]])).unwrap();
        let (ido, profile) = reduce_to_ido(&inst);
        assert!(is_ido(&ido));
        assert_eq!(profile.ascending, vec![vec![1, 2, 0]]);
        let lifted =
            lift_allocation(&inst, &profile, &IntegralAllocation::new(vec![0, 0, 0])).unwrap();
        assert_eq!(lifted.owner, vec![0, 0, 0]);
    }

    #[test]
    fn lift_by_hand() {
        // Reduced rows are (0.2, 0.5) and (0.3, 0.6). Agent 2 owns the cheap
        // reduced item and picks first: its cheapest original item is e2
        // (0.3). Agent 1 then takes the remaining e1 (0.2).
        let inst = two_agents(Kind::Chores);
        let (ido, profile) = reduce_to_ido(&inst);
        let ido_alloc = IntegralAllocation::new(vec![1, 0]);
        let lifted = lift_allocation(&inst, &profile, &ido_alloc).unwrap();
        assert_eq!(lifted.owner, vec![0, 1]);
        assert_eq!(lifted.bundle_cost(&inst, 0), ratio(1, 5));
        assert_eq!(ido_alloc.bundle_cost(&ido, 0), ratio(1, 2));
        assert_eq!(lifted.bundle_cost(&inst, 1), ratio(3, 10));
        assert_eq!(ido_alloc.bundle_cost(&ido, 1), ratio(3, 10));
    }

    #[test]
    fn identity_profile_lifts_to_itself() {
        let inst = Instance::new(
            Kind::Chores,
            vec![ratio(1, 2), ratio(1, 2)],
            rows(&[&["0.1", "0.2", "0.3"], &["0.1", "0.5", "0.5"]]),
        )
        .unwrap();
        let (_, profile) = reduce_to_ido(&inst);
        assert!(profile.is_identity());
        for owner in [vec![0, 1, 0], vec![1, 1, 0], vec![1, 0, 1]] {
            let alloc = IntegralAllocation::new(owner);
            assert_eq!(lift_allocation(&inst, &profile, &alloc).unwrap(), alloc);
        }
    }

    #[test]
    fn goods_lift_prefers_valuable_items() {
        let inst = two_agents(Kind::Goods);
        let (ido, profile) = reduce_to_ido(&inst);
        // Agent 1 owns the valuable reduced item (0.5) and picks first.
        let ido_alloc = IntegralAllocation::new(vec![1, 0]);
        let lifted = lift_allocation(&inst, &profile, &ido_alloc).unwrap();
        assert_eq!(lifted.owner, vec![1, 0]);
        assert!(lifted.bundle_cost(&inst, 0) >= ido_alloc.bundle_cost(&ido, 0));
        assert!(lifted.bundle_cost(&inst, 1) >= ido_alloc.bundle_cost(&ido, 1));
    }

    #[test]
    fn rejects_incomplete_allocation() {
        let inst = two_agents(Kind::Chores);
        let (_, profile) = reduce_to_ido(&inst);
        assert!(lift_allocation(&inst, &profile, &IntegralAllocation::new(vec![0])).is_err());
    }

    fn instance_and_owner() -> impl Strategy<Value = (Instance, Vec<usize>)> {
        (1usize..5, 0usize..7, any::<bool>()).prop_flat_map(|(n, m, goods)| {
            (
                proptest::collection::vec(proptest::collection::vec(0i64..=4, m), n),
                proptest::collection::vec(0..n, m),
            )
                .prop_map(move |(c, owner)| {
                    let costs = c
                        .iter()
                        .map(|row| row.iter().map(|&q| ratio(q, 4)).collect())
                        .collect();
                    let kind = if goods { Kind::Goods } else { Kind::Chores };
                    let weights = vec![ratio(1, n as i64); n];
                    (Instance::new(kind, weights, costs).unwrap(), owner)
                })
        })
    }

    proptest! {
        #[test]
        fn lifted_bundles_dominate((inst, owner) in instance_and_owner()) {
            let (ido, profile) = reduce_to_ido(&inst);
            prop_assert!(is_ido(&ido));
            let ido_alloc = IntegralAllocation::new(owner);
            let lifted = lift_allocation(&inst, &profile, &ido_alloc).unwrap();
            prop_assert!(lifted.check(&inst).is_ok());
            for i in 0..inst.n() {
                prop_assert_eq!(ido.total_cost(i), inst.total_cost(i));
                // Each agent keeps its item count.
                prop_assert_eq!(lifted.bundle(i).len(), ido_alloc.bundle(i).len());
                let original = lifted.bundle_cost(&inst, i);
                let reduced = ido_alloc.bundle_cost(&ido, i);
                match inst.kind() {
                    Kind::Chores => prop_assert!(original <= reduced),
                    Kind::Goods => prop_assert!(original >= reduced),
                }
            }
        }
    }
}
