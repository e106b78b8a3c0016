//! Ground truth for tests: exhaustive rounding, seeded instance generation
//! and the six-agent example instance.

use num::bigint::BigInt;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fbta::fractional_items;
use crate::model::{
    compute_subsidies, int, parse_rational, positive_part, ratio, wprop_shares,
    FractionalAllocation, Instance, IntegralAllocation, Kind, Rational, SubsidyVector,
};

pub const DEFAULT_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("{combinations} roundings exceed the cap of {cap}")]
    CapExceeded { combinations: u128, cap: u64 },
    #[error("fractional allocation is {found_n}x{found_m}, instance is {n}x{m}")]
    Shape {
        n: usize,
        m: usize,
        found_n: usize,
        found_m: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome {
    pub allocation: IntegralAllocation,
    pub subsidies: SubsidyVector,
    pub combinations: u128,
}

/// Number of integral roundings that keep every item with one of its holders.
pub fn rounding_count(x: &FractionalAllocation) -> u128 {
    fractional_items(x)
        .iter()
        .fold(1u128, |acc, (_, s)| acc.saturating_mul(s.len() as u128))
}

/// Items held wholly by one agent stay put; `None` marks fractional items.
fn fixed_owners(x: &FractionalAllocation) -> Vec<Option<usize>> {
    (0..x.m())
        .map(|e| match x.sharers(e)[..] {
            [only] => Some(only),
            _ => None,
        })
        .collect()
}

/// Minimum-subsidy rounding by exhaustive search over the holders of every
/// fractional item. Ties go to the lexicographically smallest owner vector.
pub fn brute_force_rounding(
    inst: &Instance,
    x: &FractionalAllocation,
    cap: u64,
) -> Result<OracleOutcome, OracleError> {
    if x.n() != inst.n() || x.m() != inst.m() {
        return Err(OracleError::Shape {
            n: inst.n(),
            m: inst.m(),
            found_n: x.n(),
            found_m: x.m(),
        });
    }
    let combinations = rounding_count(x);
    if combinations > cap as u128 {
        return Err(OracleError::CapExceeded { combinations, cap });
    }
    let fixed = fixed_owners(x);
    let choices: Vec<(usize, Vec<usize>)> = fractional_items(x);

    // Scale costs and shares to integers over a common denominator.
    let shares = wprop_shares(inst);
    let mut denom = BigInt::one();
    for v in inst.costs().iter().flatten().chain(shares.iter()) {
        denom = denom.lcm(v.denom());
    }
    let scale = |v: &Rational| (v * Rational::from_integer(denom.clone())).to_integer();
    let costs: Vec<Vec<BigInt>> = inst
        .costs()
        .iter()
        .map(|row| row.iter().map(scale).collect())
        .collect();
    let shares: Vec<BigInt> = shares.iter().map(scale).collect();
    let mut held = vec![BigInt::zero(); inst.n()];
    for (e, owner) in fixed.iter().enumerate() {
        if let Some(i) = owner {
            held[*i] += &costs[*i][e];
        }
    }

    let small = costs
        .iter()
        .flatten()
        .chain(shares.iter())
        .chain(held.iter())
        .all(|v| v.abs() < BigInt::from(1u64 << 40));
    let picks = if small {
        let narrow = |v: &BigInt| v.to_i128().expect("checked range");
        let search = Search {
            goods: inst.kind() == Kind::Goods,
            choices: &choices,
            costs: costs.iter().map(|r| r.iter().map(narrow).collect()).collect(),
            shares: shares.iter().map(narrow).collect(),
        };
        search.run(held.iter().map(narrow).collect())
    } else {
        let search = Search {
            goods: inst.kind() == Kind::Goods,
            choices: &choices,
            costs,
            shares,
        };
        search.run(held)
    };

    let mut owner: Vec<usize> = fixed.iter().map(|o| o.unwrap_or(0)).collect();
    for ((e, _), agent) in choices.iter().zip(picks) {
        owner[*e] = agent;
    }
    let allocation = IntegralAllocation::new(owner);
    let subsidies = compute_subsidies(inst, &allocation).expect("complete by construction");
    Ok(OracleOutcome {
        allocation,
        subsidies,
        combinations,
    })
}

trait Scalar:
    Clone + Ord + Zero + Send + Sync + for<'a> std::ops::Add<&'a Self, Output = Self>
where
    for<'a> &'a Self: std::ops::Sub<&'a Self, Output = Self>,
{
}

impl Scalar for i128 {}
impl Scalar for BigInt {}

struct Search<'a, T> {
    goods: bool,
    choices: &'a [(usize, Vec<usize>)],
    costs: Vec<Vec<T>>,
    shares: Vec<T>,
}

impl<T: Scalar> Search<'_, T>
where
    for<'b> &'b T: std::ops::Sub<&'b T, Output = T>,
{
    fn subsidy(&self, held: &[T]) -> T {
        held.iter()
            .zip(&self.shares)
            .fold(T::zero(), |acc, (h, s)| {
                let gap = if self.goods { s - h } else { h - s };
                if gap > T::zero() {
                    acc + &gap
                } else {
                    acc
                }
            })
    }

    /// Lower bound on the subsidy of any completion from `depth` on.
    fn bound(&self, held: &[T], depth: usize) -> T {
        if !self.goods {
            // Chores: holdings only grow.
            return self.subsidy(held);
        }
        // Goods: pretend each agent also receives every item it could get.
        let mut optimistic = held.to_vec();
        for (e, sharers) in &self.choices[depth..] {
            for &i in sharers {
                optimistic[i] = optimistic[i].clone() + &self.costs[i][*e];
            }
        }
        self.subsidy(&optimistic)
    }

    fn run(&self, held: Vec<T>) -> Vec<usize> {
        let Some((first_item, first_sharers)) = self.choices.first() else {
            return Vec::new();
        };
        // Branch on the first item in parallel, then merge deterministically.
        let best = first_sharers
            .par_iter()
            .map(|&agent| {
                let mut held = held.clone();
                held[agent] = held[agent].clone() + &self.costs[agent][*first_item];
                let mut path = vec![agent];
                let mut best: Option<(T, Vec<usize>)> = None;
                self.dfs(&mut held, 1, &mut path, &mut best);
                best.expect("every branch has a completion")
            })
            .collect::<Vec<_>>()
            .into_iter()
            .reduce(|a, b| if b.0 < a.0 { b } else { a })
            .expect("at least one sharer");
        best.1
    }

    fn dfs(
        &self,
        held: &mut Vec<T>,
        depth: usize,
        path: &mut Vec<usize>,
        best: &mut Option<(T, Vec<usize>)>,
    ) {
        if let Some((value, _)) = best {
            if self.bound(held, depth) >= *value {
                return;
            }
        }
        if depth == self.choices.len() {
            *best = Some((self.subsidy(held), path.clone()));
            return;
        }
        let (e, sharers) = &self.choices[depth];
        for &agent in sharers {
            let before = held[agent].clone();
            held[agent] = before.clone() + &self.costs[agent][*e];
            path.push(agent);
            self.dfs(held, depth + 1, path, best);
            path.pop();
            held[agent] = before;
        }
    }
}

/// Exact optimum over the holders of a few items, every other item fixed as in
/// `x`, scored by the same per-agent change used for component accounting but
/// computed independently here.
pub fn brute_force_component(
    inst: &Instance,
    x: &FractionalAllocation,
    items: &[usize],
) -> (Vec<usize>, Rational) {
    let sharers: Vec<Vec<usize>> = items.iter().map(|&e| x.sharers(e)).collect();
    let mut best: Option<(Rational, Vec<usize>)> = None;
    let mut index = vec![0usize; items.len()];
    loop {
        let pick: Vec<usize> = index.iter().zip(&sharers).map(|(&k, s)| s[k]).collect();
        let mut delta = vec![Rational::zero(); inst.n()];
        for (pos, &e) in items.iter().enumerate() {
            for &i in &sharers[pos] {
                let owned = if pick[pos] == i { Rational::one() } else { Rational::zero() };
                delta[i] += (owned - x.get(i, e)) * inst.cost(i, e);
            }
        }
        let total: Rational = delta
            .iter()
            .map(|d| match inst.kind() {
                Kind::Chores => positive_part(d),
                Kind::Goods => positive_part(&-d),
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, pick));
        }
        // Odometer over sharer choices, last item fastest.
        let mut pos = items.len();
        loop {
            if pos == 0 {
                let (value, pick) = best.expect("at least one assignment");
                return (pick, value);
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < sharers[pos].len() {
                break;
            }
            index[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightDist {
    Equal,
    /// Integers drawn from 1..=10, normalized.
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostDist {
    /// Independent `q / denominator` with q uniform in 0..=denominator.
    Uniform { denominator: u32 },
    /// A shared base value per item plus per-agent noise of up to a fifth of
    /// the range, clamped to [0, 1].
    Correlated { denominator: u32 },
    /// Uniform, then each row sorted ascending.
    Ido { denominator: u32 },
}

impl CostDist {
    fn denominator(self) -> u32 {
        match self {
            CostDist::Uniform { denominator }
            | CostDist::Correlated { denominator }
            | CostDist::Ido { denominator } => denominator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    pub kind: Kind,
    pub weights: WeightDist,
    pub costs: CostDist,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("need at least one agent")]
    NoAgents,
    #[error("cost denominator must be positive")]
    ZeroDenominator,
}

pub fn gen_random_instance(params: &GenParams) -> Result<Instance, GenError> {
    if params.n == 0 {
        return Err(GenError::NoAgents);
    }
    let d = params.costs.denominator();
    if d == 0 {
        return Err(GenError::ZeroDenominator);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let raw: Vec<i64> = match params.weights {
        WeightDist::Equal => vec![1; params.n],
        WeightDist::Integer => (0..params.n).map(|_| rng.gen_range(1..=10)).collect(),
    };
    let total: i64 = raw.iter().sum();
    let weights = raw.iter().map(|&w| ratio(w, total)).collect();

    let d = i64::from(d);
    let base: Vec<i64> = (0..params.m).map(|_| rng.gen_range(0..=d)).collect();
    let spread = d / 5;
    let mut costs = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let mut row: Vec<i64> = match params.costs {
            CostDist::Uniform { .. } | CostDist::Ido { .. } => {
                (0..params.m).map(|_| rng.gen_range(0..=d)).collect()
            }
            CostDist::Correlated { .. } => base
                .iter()
                .map(|&b| (b + rng.gen_range(-spread..=spread)).clamp(0, d))
                .collect(),
        };
        if matches!(params.costs, CostDist::Ido { .. }) {
            row.sort_unstable();
        }
        costs.push(row.into_iter().map(|q| ratio(q, d)).collect());
    }
    Ok(Instance::new(params.kind, weights, costs).expect("dimensions match by construction"))
}

/// The six-agent, six-item chores example.
pub fn istar_instance() -> Instance {
    let weights = vec![ratio(1, 12), ratio(1, 12), ratio(1, 12), ratio(1, 6), ratio(1, 4), ratio(1, 3)];
    let rows: [[&str; 6]; 6] = [
        ["0.7", "0.7", "0.7", "0.7", "1", "1"],
        ["0.8", "0.8", "0.8", "0.8", "0.8", "0.8"],
        ["0.7", "0.8", "0.8", "0.8", "0.8", "0.9"],
        ["0.8", "0.8", "0.8", "1", "1", "1"],
        ["1", "1", "1", "1", "1", "1"],
        ["0.8", "0.8", "0.8", "1", "1", "1"],
    ];
    let costs = rows
        .iter()
        .map(|row| row.iter().map(|t| parse_rational(t).expect("literal")).collect())
        .collect();
    Instance::new(Kind::Chores, weights, costs).expect("6x6")
}

/// Reference fractional allocation of the six-agent example.
pub fn istar_reference_allocation() -> FractionalAllocation {
    let z = || int(0);
    FractionalAllocation::from_rows(vec![
        vec![ratio(4, 7), z(), z(), z(), z(), z()],
        vec![z(), ratio(1, 2), z(), z(), z(), z()],
        vec![ratio(3, 7), ratio(1, 8), z(), z(), z(), z()],
        vec![z(), ratio(3, 8), ratio(3, 4), z(), z(), z()],
        vec![z(), z(), z(), int(1), ratio(1, 2), z()],
        vec![z(), z(), ratio(1, 4), z(), ratio(1, 2), int(1)],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbta::{run_fbta, DegeneratePolicy};
    use crate::ido::is_ido;
    use crate::model::{serialize_instance, sum, validate_instance, wprop_share};

    #[test]
    fn six_agent_instance() {
        let inst = istar_instance();
        assert_eq!(inst.cost(2, 5), &ratio(9, 10));
        assert_eq!(sum(inst.weights()), int(1));
        assert!(validate_instance(&inst).is_valid());
        assert!(is_ido(&inst));
        assert_eq!(wprop_share(&inst, 0).unwrap(), ratio(2, 5));
        assert!(istar_reference_allocation().is_complete());
    }

    #[test]
    fn reference_allocation_has_twenty_four_roundings() {
        let inst = istar_instance();
        let x = istar_reference_allocation();
        assert_eq!(rounding_count(&x), 24);
        let out = brute_force_rounding(&inst, &x, DEFAULT_CAP).unwrap();
        // Replay the 24 candidates directly.
        let mut best: Option<(Rational, Vec<usize>)> = None;
        for a in [0, 2] {
            for b in [1, 2, 3] {
                for c in [3, 5] {
                    for d in [4, 5] {
                        let owner = vec![a, b, c, 4, d, 5];
                        let s = compute_subsidies(&inst, &IntegralAllocation::new(owner.clone()))
                            .unwrap()
                            .total;
                        if best.as_ref().is_none_or(|(v, _)| s < *v) {
                            best = Some((s, owner));
                        }
                    }
                }
            }
        }
        let (value, owner) = best.unwrap();
        assert_eq!(out.subsidies.total, value);
        assert_eq!(out.allocation.owner, owner);
        assert!(out.subsidies.total <= ratio(11, 6));
    }

    #[test]
    fn integral_input_is_its_own_optimum() {
        let inst = istar_instance();
        let alloc = IntegralAllocation::new(vec![0, 1, 2, 3, 4, 5]);
        let x = FractionalAllocation::from_integral(&alloc, 6);
        let out = brute_force_rounding(&inst, &x, DEFAULT_CAP).unwrap();
        assert_eq!(out.allocation, alloc);
        assert_eq!(out.combinations, 1);
    }

    #[test]
    fn one_shared_item() {
        let inst = Instance::new(Kind::Chores, vec![ratio(1, 2); 2], vec![vec![int(1)]; 2]).unwrap();
        let x = FractionalAllocation::from_rows(vec![vec![ratio(1, 2)], vec![ratio(1, 2)]]);
        let out = brute_force_rounding(&inst, &x, DEFAULT_CAP).unwrap();
        assert_eq!(out.subsidies.total, ratio(1, 2));
        assert_eq!(out.allocation.owner, vec![0]);
        assert_eq!(
            brute_force_rounding(&inst, &x, 1),
            Err(OracleError::CapExceeded { combinations: 2, cap: 1 })
        );
    }

    #[test]
    fn goods_search_matches_full_enumeration() {
        for seed in 0..40 {
            let inst = gen_random_instance(&GenParams {
                n: 5,
                m: 7,
                kind: Kind::Goods,
                weights: WeightDist::Integer,
                costs: CostDist::Ido { denominator: 10 },
                seed,
            })
            .unwrap();
            let (x, _) = run_fbta(&inst, DegeneratePolicy::Exclude).unwrap();
            let out = brute_force_rounding(&inst, &x, DEFAULT_CAP).unwrap();
            let items: Vec<usize> = fractional_items(&x).into_iter().map(|(e, _)| e).collect();
            // Enumerate every rounding without pruning.
            let mut best: Option<Rational> = None;
            let sharers: Vec<Vec<usize>> = items.iter().map(|&e| x.sharers(e)).collect();
            let total = rounding_count(&x) as usize;
            for mut code in 0..total {
                let mut owner: Vec<usize> = fixed_owners(&x).iter().map(|o| o.unwrap_or(0)).collect();
                for (pos, &e) in items.iter().enumerate().rev() {
                    owner[e] = sharers[pos][code % sharers[pos].len()];
                    code /= sharers[pos].len();
                }
                let s = compute_subsidies(&inst, &IntegralAllocation::new(owner)).unwrap().total;
                if best.as_ref().is_none_or(|b| s < *b) {
                    best = Some(s);
                }
            }
            assert_eq!(out.subsidies.total, best.unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let params = GenParams {
            n: 4,
            m: 6,
            kind: Kind::Chores,
            weights: WeightDist::Integer,
            costs: CostDist::Correlated { denominator: 20 },
            seed: 11,
        };
        let a = gen_random_instance(&params).unwrap();
        assert_eq!(a, gen_random_instance(&params).unwrap());
        assert!(validate_instance(&a).is_valid());
        let other = gen_random_instance(&GenParams { seed: 12, ..params }).unwrap();
        assert_ne!(serialize_instance(&a), serialize_instance(&other));
    }

    #[test]
    fn generator_options() {
        let base = GenParams {
            n: 3,
            m: 8,
            kind: Kind::Goods,
            weights: WeightDist::Equal,
            costs: CostDist::Ido { denominator: 7 },
            seed: 3,
        };
        let inst = gen_random_instance(&base).unwrap();
        assert!(is_ido(&inst));
        assert_eq!(inst.weights(), &[ratio(1, 3), ratio(1, 3), ratio(1, 3)]);
        assert_eq!(
            gen_random_instance(&GenParams { n: 0, ..base }),
            Err(GenError::NoAgents)
        );
        assert_eq!(
            gen_random_instance(&GenParams { costs: CostDist::Uniform { denominator: 0 }, ..base }),
            Err(GenError::ZeroDenominator)
        );
        let single = gen_random_instance(&GenParams { n: 1, ..base }).unwrap();
        assert_eq!(single.weights(), &[int(1)]);
    }
}
