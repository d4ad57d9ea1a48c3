//! Brute-force oracles on tiny graphs: exact expected spread by enumerating every live
//! graph, exhaustive optimal seed sets, and the exact value of the myopic multiphase
//! policy.
//!
//! Node sets are `u64` masks, so graphs are limited to 64 nodes on top of the edge and
//! subset limits in [`EnumerationLimit`].
//!
//! Later phases are optimised on the residual instance: influenced nodes and every edge
//! touching them are removed. An edge out of an influenced node whose coin failed is not
//! retried; each edge's coin is flipped once, exactly as in a live graph.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, WeightedDigraph};
use crate::livegraph::LiveGraphEnsemble;
use crate::multiphase::BudgetSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationLimit {
    pub max_edges: usize,
    pub max_seed_subsets: u128,
}

impl Default for EnumerationLimit {
    fn default() -> Self {
        Self {
            max_edges: 20,
            max_seed_subsets: 1 << 20,
        }
    }
}

const MAX_NODES: usize = 64;

struct Tiny {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Tiny {
    fn new(g: &WeightedDigraph, limit: &EnumerationLimit) -> Result<Self> {
        if g.node_count() > MAX_NODES {
            return Err(Error::Refused {
                what: "nodes",
                actual: g.node_count() as u128,
                limit: MAX_NODES as u128,
            });
        }
        if g.edge_count() > limit.max_edges {
            return Err(Error::Refused {
                what: "edges",
                actual: g.edge_count() as u128,
                limit: limit.max_edges as u128,
            });
        }
        let probs = g.probabilities()?;
        Ok(Self {
            n: g.node_count(),
            edges: g
                .edges()
                .zip(probs)
                .map(|((u, v, _), p)| (u as usize, v as usize, p))
                .collect(),
        })
    }

    /// Edges with both endpoints outside `blocked`.
    fn residual_edges(&self, blocked: u64) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .copied()
            .filter(|&(u, v, _)| blocked >> u & 1 == 0 && blocked >> v & 1 == 0)
            .collect()
    }
}

/// Visits every live graph over `edges` with its probability, as (presence mask, prob).
fn for_each_live_graph(edges: &[(usize, usize, f64)], mut f: impl FnMut(u64, f64)) {
    let m = edges.len();
    for mask in 0..(1u64 << m) {
        let prob = edges
            .iter()
            .enumerate()
            .map(|(j, &(_, _, p))| if mask >> j & 1 == 1 { p } else { 1.0 - p })
            .product();
        f(mask, prob);
    }
}

/// Nodes reachable from `seeds` over the live edges in `mask`.
fn reach_mask(edges: &[(usize, usize, f64)], mask: u64, seeds: u64) -> u64 {
    let mut reached = seeds;
    loop {
        let mut next = reached;
        for (j, &(u, v, _)) in edges.iter().enumerate() {
            if mask >> j & 1 == 1 && reached >> u & 1 == 1 {
                next |= 1 << v;
            }
        }
        if next == reached {
            return reached;
        }
        reached = next;
    }
}

fn to_mask(seeds: &[NodeId], n: usize) -> Result<u64> {
    seeds.iter().try_fold(0u64, |acc, &s| {
        if s as usize >= n {
            return Err(Error::IndexOutOfRange {
                index: s as usize,
                len: n,
            });
        }
        Ok(acc | 1 << s)
    })
}

fn from_mask(mask: u64) -> Vec<NodeId> {
    (0..64).filter(|&i| mask >> i & 1 == 1).map(|i| i as NodeId).collect()
}

/// Sum of the occurrence probabilities of all `2^m` live graphs.
pub fn total_live_graph_probability(g: &WeightedDigraph, limit: &EnumerationLimit) -> Result<f64> {
    let tiny = Tiny::new(g, limit)?;
    let mut total = 0.0;
    for_each_live_graph(&tiny.edges, |_, p| total += p);
    Ok(total)
}

/// Expected number of nodes reachable from `seeds`, averaged exactly over live graphs.
pub fn exact_spread(g: &WeightedDigraph, seeds: &[NodeId], limit: &EnumerationLimit) -> Result<f64> {
    let tiny = Tiny::new(g, limit)?;
    let seeds = to_mask(seeds, tiny.n)?;
    Ok(residual_spread(&tiny.edges, 0, seeds))
}

/// Expected number of residual nodes reached from `seeds` over `edges`.
fn residual_spread(edges: &[(usize, usize, f64)], blocked: u64, seeds: u64) -> f64 {
    let mut total = 0.0;
    for_each_live_graph(edges, |mask, p| {
        total += p * (reach_mask(edges, mask, seeds) & !blocked).count_ones() as f64;
    });
    total
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Best `budget`-subset of the open nodes on the residual instance. Ties go to the
/// lexicographically smallest node list.
fn optimal_on(tiny: &Tiny, blocked: u64, budget: usize, limit: &EnumerationLimit) -> Result<(u64, f64)> {
    let open: Vec<usize> = (0..tiny.n).filter(|&v| blocked >> v & 1 == 0).collect();
    let budget = budget.min(open.len());
    let subsets = binomial(open.len(), budget);
    if subsets > limit.max_seed_subsets {
        return Err(Error::Refused {
            what: "seed subsets",
            actual: subsets,
            limit: limit.max_seed_subsets,
        });
    }
    let edges = tiny.residual_edges(blocked);

    let mut best: Option<(u64, f64)> = None;
    let mut pick: Vec<usize> = (0..budget).collect();
    loop {
        let seeds = pick.iter().fold(0u64, |acc, &i| acc | 1 << open[i]);
        let value = residual_spread(&edges, blocked, seeds);
        if best.is_none_or(|(_, b)| value > b + 1e-12) {
            best = Some((seeds, value));
        }
        // next combination in lexicographic order
        let Some(i) = (0..budget).rev().find(|&i| pick[i] < open.len() - budget + i) else {
            break;
        };
        pick[i] += 1;
        for j in i + 1..budget {
            pick[j] = pick[j - 1] + 1;
        }
    }
    Ok(best.expect("at least the empty subset is evaluated"))
}

/// Exhaustively optimal seed set of size `min(budget, n)` and its exact expected spread.
pub fn exact_optimal_seeds(g: &WeightedDigraph, budget: usize, limit: &EnumerationLimit) -> Result<(Vec<NodeId>, f64)> {
    let tiny = Tiny::new(g, limit)?;
    let (seeds, value) = optimal_on(&tiny, 0, budget, limit)?;
    Ok((from_mask(seeds), value))
}

/// Exact expected final spread of myopic multiphase seeding with exhaustively optimal
/// per-phase selection.
///
/// After each phase the outcomes are grouped by influenced set, and the next phase is
/// re-optimised once per distinct set. Budget a phase cannot spend is carried to the
/// terminal phase.
pub fn exact_myopic_value(g: &WeightedDigraph, split: &BudgetSplit, limit: &EnumerationLimit) -> Result<f64> {
    let tiny = Tiny::new(g, limit)?;
    myopic(&tiny, split.allocations(), 0, 0, limit)
}

fn myopic(tiny: &Tiny, allocations: &[usize], blocked: u64, carry: usize, limit: &EnumerationLimit) -> Result<f64> {
    let Some((&k, rest)) = allocations.split_first() else {
        return Ok(blocked.count_ones() as f64);
    };
    let budget = k + if rest.is_empty() { carry } else { 0 };
    let (seeds, _) = optimal_on(tiny, blocked, budget, limit)?;
    let carry = carry + budget - seeds.count_ones() as usize;

    let edges = tiny.residual_edges(blocked);
    let mut outcomes: BTreeMap<u64, f64> = BTreeMap::new();
    for_each_live_graph(&edges, |mask, p| {
        *outcomes.entry(reach_mask(&edges, mask, seeds)).or_default() += p;
    });
    let mut value = 0.0;
    for (reached, p) in outcomes {
        if p > 0.0 {
            value += p * myopic(tiny, rest, blocked | reached, carry, limit)?;
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheck {
    pub mc_mean: f64,
    pub mc_std: f64,
    pub exact: f64,
    /// `|mc_mean - exact| / (mc_std / sqrt(M))`; `None` when the sample has no spread.
    pub z_score: Option<f64>,
}

impl EnsembleCheck {
    /// Passes if `|z| < threshold`, or, with zero spread, if the means agree to 1e-9.
    pub fn passes(&self, threshold: f64) -> bool {
        match self.z_score {
            Some(z) => z.abs() < threshold,
            None => (self.mc_mean - self.exact).abs() <= 1e-9,
        }
    }
}

/// Cross-checks an ensemble's Monte Carlo spread estimate against the exact value.
pub fn validate_ensemble(e: &LiveGraphEnsemble, seeds: &[NodeId], limit: &EnumerationLimit) -> Result<EnsembleCheck> {
    let exact = exact_spread(e.graph(), seeds, limit)?;
    let sizes = e.reach_sizes(seeds);
    let (mc_mean, mc_std) = crate::stats::mean_and_std(&sizes);
    let z_score = (mc_std > 0.0).then(|| (mc_mean - exact).abs() / (mc_std / (e.len() as f64).sqrt()));
    Ok(EnsembleCheck {
        mc_mean,
        mc_std,
        exact,
        z_score,
    })
}

/// Step-by-step Independent Cascade driven by fixed per-edge coins: when `u` first
/// becomes active it tries each out-edge `e` once, succeeding iff `coins[e] < p(e)`.
pub fn simulate_cascade(g: &WeightedDigraph, seeds: &[NodeId], coins: &[f64]) -> Result<FixedBitSet> {
    let probs = g.probabilities()?;
    let mut active = FixedBitSet::with_capacity(g.node_count());
    let mut frontier: Vec<NodeId> = Vec::new();
    for &s in seeds {
        if !active.put(s as usize) {
            frontier.push(s);
        }
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for u in frontier {
            for e in g.out_edges(u) {
                let v = g.target(e);
                if coins[e] < probs[e] && !active.put(v as usize) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    Ok(active)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: NodeId = 0;
    const B: NodeId = 1;
    const C: NodeId = 2;
    const D: NodeId = 3;
    const E: NodeId = 4;

    fn myopic_gap() -> WeightedDigraph {
        WeightedDigraph::from_weighted_edges(5, &[(A, C, 0.5), (B, C, 0.5), (C, D, 1.0), (C, E, 1.0)]).unwrap()
    }

    fn lim() -> EnumerationLimit {
        EnumerationLimit::default()
    }

    #[test]
    fn myopic_gap_single_phase_values() {
        let g = myopic_gap();
        let spread = |s: &[NodeId]| exact_spread(&g, s, &lim()).unwrap();
        assert!((spread(&[A, B]) - 4.25).abs() < 1e-12);
        assert!((spread(&[C, A]) - 4.0).abs() < 1e-12);
        assert!((spread(&[C, D]) - 3.0).abs() < 1e-12);
        assert!((spread(&[A, D]) - 3.0).abs() < 1e-12);
        assert!((spread(&[D, E]) - 2.0).abs() < 1e-12);
        assert!((spread(&[A]) - 2.5).abs() < 1e-12);
        assert_eq!(spread(&[A, B, C, D, E]), 5.0);
    }

    #[test]
    fn myopic_gap_optimal_seeds() {
        let g = myopic_gap();
        let (s, v) = exact_optimal_seeds(&g, 2, &lim()).unwrap();
        assert_eq!((s, v), (vec![A, B], 4.25));
        let (s, v) = exact_optimal_seeds(&g, 1, &lim()).unwrap();
        assert_eq!(s, vec![C]);
        assert!((v - 3.0).abs() < 1e-12);
        let (s, v) = exact_optimal_seeds(&g, 5, &lim()).unwrap();
        assert_eq!((s.len(), v), (5, 5.0));
    }

    #[test]
    fn myopic_gap_myopic_values() {
        let g = myopic_gap();
        let two = exact_myopic_value(&g, &BudgetSplit::single(2), &lim()).unwrap();
        let split = exact_myopic_value(&g, &"1,1".parse().unwrap(), &lim()).unwrap();
        assert!((two - 4.25).abs() < 1e-12);
        assert!((split - 4.0).abs() < 1e-12);
        assert!(split < two);
    }

    #[test]
    fn limits_are_enforced() {
        let g = crate::graph::generate::gnm(10, 25, 1).unwrap().uniform(0.5).unwrap();
        let err = exact_spread(&g, &[0], &lim()).unwrap_err();
        assert!(err.is_refusal());
        let small = EnumerationLimit {
            max_edges: 30,
            max_seed_subsets: 10,
        };
        let g = crate::graph::generate::gnm(10, 5, 1).unwrap().uniform(0.5).unwrap();
        assert!(exact_optimal_seeds(&g, 3, &small).unwrap_err().is_refusal());
    }

    #[test]
    fn certain_graph_myopic_equals_reach() {
        let g = WeightedDigraph::from_weighted_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let v = exact_myopic_value(&g, &BudgetSplit::single(4), &lim()).unwrap();
        assert_eq!(v, 4.0);
        let v = exact_myopic_value(&g, &"1,1".parse().unwrap(), &lim()).unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn single_edge_ensemble_check() {
        let g = WeightedDigraph::from_weighted_edges(2, &[(0, 1, 0.5)]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 5000, 3).unwrap();
        let check = validate_ensemble(&e, &[0], &lim()).unwrap();
        assert_eq!(check.exact, 1.5);
        assert!(check.z_score.unwrap() < 3.0, "{check:?}");
    }

    #[test]
    fn certain_ensemble_check_has_no_z() {
        let g = WeightedDigraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 10, 3).unwrap();
        let check = validate_ensemble(&e, &[0], &lim()).unwrap();
        assert_eq!(check.z_score, None);
        assert_eq!(check.mc_mean, check.exact);
        assert!(check.passes(4.0));
    }

    #[test]
    fn cascade_follows_coins() {
        let g = myopic_gap();
        // A->C fails, B->C fires
        let coins = [0.9, 0.1, 0.0, 0.0];
        let from_a = simulate_cascade(&g, &[A], &coins).unwrap();
        assert_eq!(from_a.ones().collect::<Vec<_>>(), vec![0]);
        let from_b = simulate_cascade(&g, &[B], &coins).unwrap();
        assert_eq!(from_b.ones().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }
}
