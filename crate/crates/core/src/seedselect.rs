//! Seed selectors applied to a diffusion state's residual network.
//!
//! A residual network drops the already-influenced nodes together with every edge
//! touching them. Live-graph coins are flipped once, so edges out of influenced nodes
//! that did not fire stay dead. Selectors only ever return uninfluenced nodes and break
//! ties towards the lowest node id.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, WeightedDigraph};
use crate::livegraph::{Condensation, LiveGraphEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    /// Lazy (CELF) greedy on the live-graph coverage objective.
    Greedy,
    DegreeDiscount,
    Irie,
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" | "live-graph-greedy" | "celf" => Ok(Self::Greedy),
            "degree-discount" | "dd" => Ok(Self::DegreeDiscount),
            "irie" => Ok(Self::Irie),
            other => Err(Error::validation(format!("unknown selector {other:?}"))),
        }
    }
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::DegreeDiscount => "degree-discount",
            Self::Irie => "irie",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub kind: SelectorKind,
    pub irie_alpha: f64,
    pub irie_iterations: usize,
    pub convergence_tol: f64,
    /// Live graphs used by the greedy selector to estimate marginal gains. `0` plans on
    /// the evaluation ensemble itself; otherwise an independent ensemble of this size is
    /// sampled from a seed derived from the evaluation ensemble's master seed.
    pub planning_graphs: usize,
}

impl Default for SelectorSpec {
    fn default() -> Self {
        Self {
            kind: SelectorKind::Greedy,
            irie_alpha: 0.7,
            irie_iterations: 20,
            convergence_tol: 1e-4,
            planning_graphs: 0,
        }
    }
}

impl SelectorSpec {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn of(kind: SelectorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.irie_alpha > 0.0 && self.irie_alpha < 1.0) {
            return Err(Error::validation(format!(
                "irie_alpha must lie in (0, 1), got {}",
                self.irie_alpha
            )));
        }
        if self.irie_iterations == 0 {
            return Err(Error::validation("irie_iterations must be at least 1"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::validation("convergence_tol must be non-negative"));
        }
        Ok(())
    }
}

/// Chooses up to `budget` seeds among the nodes not in `influenced`.
///
/// `planning` supplies the live graphs the greedy selector averages over; the other
/// selectors only look at its base graph. Returns exactly
/// `min(budget, #uninfluenced)` distinct nodes in selection order.
pub fn select_seeds(
    planning: &LiveGraphEnsemble,
    influenced: Option<&FixedBitSet>,
    budget: usize,
    spec: &SelectorSpec,
) -> Result<Vec<NodeId>> {
    spec.validate()?;
    let g = planning.graph();
    let blocked = blocked_or_empty(g.node_count(), influenced);
    Ok(match spec.kind {
        SelectorKind::Greedy => greedy_celf(planning, &blocked, budget),
        SelectorKind::DegreeDiscount => degree_discount(g, &blocked, budget)?,
        SelectorKind::Irie => irie_select(g, &blocked, budget, spec)?,
    })
}

fn blocked_or_empty(n: usize, influenced: Option<&FixedBitSet>) -> FixedBitSet {
    let mut blocked = influenced.cloned().unwrap_or_default();
    blocked.grow(n);
    blocked
}

/// Bytes the bitset coverage backend may use before falling back to BFS.
const BITSET_BACKEND_BUDGET: usize = 256 << 20;

/// Per-live-graph reachability on a residual network, with a running covered set.
enum Coverage<'a> {
    /// Reach bitsets per residual SCC; each gain is a word-wise difference count.
    Bitsets {
        words: usize,
        graphs: Vec<ResidualReach>,
        covered: Vec<Vec<u64>>,
    },
    /// Pruned BFS on demand; only the covered sets are stored.
    Search {
        ensemble: &'a LiveGraphEnsemble,
        covered: Vec<FixedBitSet>,
    },
}

struct ResidualReach {
    component: Vec<u32>,
    reach: Vec<u64>,
}

impl ResidualReach {
    fn build(ensemble: &LiveGraphEnsemble, index: usize, blocked: &FixedBitSet, words: usize) -> Self {
        let n = ensemble.node_count();
        let cond = Condensation::build(n, |v| {
            let skip = blocked.contains(v as usize);
            ensemble
                .live_successors(index, v)
                .filter(move |&w| !skip && !blocked.contains(w as usize))
        });
        let count = cond.component_count();
        let mut reach = vec![0u64; count * words];
        // successors always have smaller ids, so ascending order is a valid DP order
        for c in 0..count as u32 {
            let (done, rest) = reach.split_at_mut(c as usize * words);
            let row = &mut rest[..words];
            for &v in cond.members(c) {
                row[v as usize / 64] |= 1 << (v % 64);
            }
            for &d in cond.successors(c) {
                let other = &done[d as usize * words..(d as usize + 1) * words];
                for (a, b) in row.iter_mut().zip(other) {
                    *a |= b;
                }
            }
        }
        Self {
            component: cond.component,
            reach,
        }
    }

    fn row(&self, node: NodeId, words: usize) -> &[u64] {
        let c = self.component[node as usize] as usize;
        &self.reach[c * words..(c + 1) * words]
    }
}

impl<'a> Coverage<'a> {
    fn new(ensemble: &'a LiveGraphEnsemble, blocked: &FixedBitSet) -> Self {
        let n = ensemble.node_count();
        let words = n.div_ceil(64).max(1);
        let bytes = n.saturating_mul(words).saturating_mul(8).saturating_mul(ensemble.len());
        if bytes <= BITSET_BACKEND_BUDGET {
            let graphs = (0..ensemble.len())
                .into_par_iter()
                .map(|i| ResidualReach::build(ensemble, i, blocked, words))
                .collect();
            let mut base = vec![0u64; words];
            for v in blocked.ones() {
                base[v / 64] |= 1 << (v % 64);
            }
            Coverage::Bitsets {
                words,
                graphs,
                covered: vec![base; ensemble.len()],
            }
        } else {
            Coverage::Search {
                ensemble,
                covered: vec![blocked.clone(); ensemble.len()],
            }
        }
    }

    /// Total number of newly covered nodes over all live graphs if `v` were added.
    fn gain(&self, v: NodeId) -> u64 {
        match self {
            Coverage::Bitsets { words, graphs, covered } => graphs
                .iter()
                .zip(covered)
                .map(|(g, cov)| {
                    g.row(v, *words)
                        .iter()
                        .zip(cov)
                        .map(|(r, c)| (r & !c).count_ones() as u64)
                        .sum::<u64>()
                })
                .sum(),
            Coverage::Search { ensemble, covered } => covered
                .iter()
                .enumerate()
                .map(|(i, cov)| pruned_search(ensemble, i, cov, v, |_| {}) as u64)
                .sum(),
        }
    }

    fn add(&mut self, v: NodeId) {
        match self {
            Coverage::Bitsets { words, graphs, covered } => {
                for (g, cov) in graphs.iter().zip(covered.iter_mut()) {
                    for (c, r) in cov.iter_mut().zip(g.row(v, *words)) {
                        *c |= r;
                    }
                }
            }
            Coverage::Search { ensemble, covered } => {
                for (i, cov) in covered.iter_mut().enumerate() {
                    let mut reached = Vec::new();
                    pruned_search(ensemble, i, cov, v, |w| reached.push(w));
                    for w in reached {
                        cov.insert(w as usize);
                    }
                }
            }
        }
    }
}

/// Counts nodes reachable from `start` in live graph `index` without entering `covered`.
fn pruned_search(
    ensemble: &LiveGraphEnsemble,
    index: usize,
    covered: &FixedBitSet,
    start: NodeId,
    mut visit: impl FnMut(NodeId),
) -> usize {
    if covered.contains(start as usize) {
        return 0;
    }
    let mut seen = FixedBitSet::with_capacity(ensemble.node_count());
    let mut stack = vec![start];
    seen.insert(start as usize);
    let mut count = 0;
    while let Some(u) = stack.pop() {
        count += 1;
        visit(u);
        for w in ensemble.live_successors(index, u) {
            if !covered.contains(w as usize) && !seen.put(w as usize) {
                stack.push(w);
            }
        }
    }
    count
}

/// Lazy greedy maximisation of mean residual reach over the live graphs of `planning`.
///
/// Gains are integer totals over the ensemble, so the lazy queue reproduces plain greedy
/// exactly, ties included.
pub fn greedy_celf(planning: &LiveGraphEnsemble, blocked: &FixedBitSet, budget: usize) -> Vec<NodeId> {
    let n = planning.node_count();
    let candidates: Vec<NodeId> = (0..n as NodeId).filter(|&v| !blocked.contains(v as usize)).collect();
    let budget = budget.min(candidates.len());
    if budget == 0 {
        return Vec::new();
    }
    let mut coverage = Coverage::new(planning, blocked);
    let initial: Vec<(u64, NodeId)> = candidates.par_iter().map(|&v| (coverage.gain(v), v)).collect();
    let mut queue: BinaryHeap<(u64, Reverse<NodeId>, usize)> =
        initial.into_iter().map(|(g, v)| (g, Reverse(v), 0)).collect();

    let mut picked = Vec::with_capacity(budget);
    while picked.len() < budget {
        let (gain, Reverse(v), round) = queue.pop().expect("queue holds every candidate");
        if round == picked.len() {
            coverage.add(v);
            picked.push(v);
        } else {
            let fresh = coverage.gain(v);
            debug_assert!(fresh <= gain, "marginal gains must not increase");
            queue.push((fresh, Reverse(v), picked.len()));
        }
    }
    picked
}

/// Degree discount with `p` fixed at the graph's mean edge probability.
///
/// Degrees count out-edges into the residual network; selecting `u` discounts each
/// residual out-neighbour `v` through `t_v`, its number of selected in-neighbours:
/// `dd_v = d_v - 2 t_v - (d_v - t_v) t_v p`.
pub fn degree_discount(g: &WeightedDigraph, blocked: &FixedBitSet, budget: usize) -> Result<Vec<NodeId>> {
    let n = g.node_count();
    let p = g.mean_probability()?;
    let open = |v: NodeId| !blocked.contains(v as usize);
    let degree: Vec<f64> = (0..n as NodeId)
        .map(|u| g.out_edges(u).filter(|&e| open(g.target(e))).count() as f64)
        .collect();
    let mut selected_in = vec![0f64; n];
    let mut score = degree.clone();
    let mut taken = blocked.clone();

    let budget = budget.min(n - blocked.count_ones(..));
    let mut picked = Vec::with_capacity(budget);
    for _ in 0..budget {
        let best = (0..n)
            .filter(|&v| !taken.contains(v))
            .fold(None::<usize>, |best, v| match best {
                Some(b) if score[b] >= score[v] => Some(b),
                _ => Some(v),
            })
            .expect("budget is clamped to the open nodes");
        taken.insert(best);
        picked.push(best as NodeId);
        for e in g.out_edges(best as NodeId) {
            let v = g.target(e) as usize;
            if taken.contains(v) {
                continue;
            }
            selected_in[v] += 1.0;
            let (d, t) = (degree[v], selected_in[v]);
            score[v] = d - 2.0 * t - (d - t) * t * p;
        }
    }
    Ok(picked)
}

/// Influence ranks on the residual network with no seeds chosen yet.
///
/// Iterates `r(u) = AP(u) (1 + alpha * sum p(u,v) r(v))` over residual out-edges, where
/// `AP(u)` is the chance `u` is not yet activated (0 for blocked nodes, 1 otherwise).
pub fn irie_rank(g: &WeightedDigraph, blocked: &FixedBitSet, spec: &SelectorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let not_activated: Vec<f64> = (0..g.node_count())
        .map(|v| if blocked.contains(v) { 0.0 } else { 1.0 })
        .collect();
    let mut rank = not_activated.clone();
    iterate_ranks(g, blocked, &not_activated, &mut rank, spec)?;
    Ok(rank)
}

fn iterate_ranks(
    g: &WeightedDigraph,
    blocked: &FixedBitSet,
    not_activated: &[f64],
    rank: &mut Vec<f64>,
    spec: &SelectorSpec,
) -> Result<()> {
    let probs = g.probabilities()?;
    let mut next = vec![0.0; rank.len()];
    for _ in 0..spec.irie_iterations {
        let mut delta: f64 = 0.0;
        for u in 0..g.node_count() {
            if not_activated[u] == 0.0 {
                next[u] = 0.0;
            } else {
                let spread: f64 = g
                    .out_edges(u as NodeId)
                    .filter(|&e| !blocked.contains(g.target(e) as usize))
                    .map(|e| probs[e] * rank[g.target(e) as usize])
                    .sum();
                next[u] = not_activated[u] * (1.0 + spec.irie_alpha * spread);
            }
            delta = delta.max((next[u] - rank[u]).abs());
        }
        std::mem::swap(rank, &mut next);
        if delta < spec.convergence_tol {
            break;
        }
    }
    Ok(())
}

/// Picks seeds by maximum rank, updating one-hop activation estimates after each pick.
pub fn irie_select(
    g: &WeightedDigraph,
    blocked: &FixedBitSet,
    budget: usize,
    spec: &SelectorSpec,
) -> Result<Vec<NodeId>> {
    spec.validate()?;
    let n = g.node_count();
    let probs = g.probabilities()?;
    let mut not_activated: Vec<f64> = (0..n).map(|v| if blocked.contains(v) { 0.0 } else { 1.0 }).collect();
    let mut rank = not_activated.clone();
    let mut taken = blocked.clone();
    let budget = budget.min(n - blocked.count_ones(..));
    let mut picked = Vec::with_capacity(budget);
    for _ in 0..budget {
        iterate_ranks(g, blocked, &not_activated, &mut rank, spec)?;
        let best = (0..n)
            .filter(|&v| !taken.contains(v))
            .fold(None::<usize>, |best, v| match best {
                Some(b) if rank[b] >= rank[v] => Some(b),
                _ => Some(v),
            })
            .expect("budget is clamped to the open nodes");
        taken.insert(best);
        picked.push(best as NodeId);
        not_activated[best] = 0.0;
        for e in g.out_edges(best as NodeId) {
            let v = g.target(e) as usize;
            if !blocked.contains(v) {
                not_activated[v] *= 1.0 - probs[e];
            }
        }
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;

    fn empty(n: usize) -> FixedBitSet {
        FixedBitSet::with_capacity(n)
    }

    fn myopic_gap() -> WeightedDigraph {
        // A=0 B=1 C=2 D=3 E=4
        WeightedDigraph::from_weighted_edges(5, &[(0, 2, 0.5), (1, 2, 0.5), (2, 3, 1.0), (2, 4, 1.0)]).unwrap()
    }

    #[test]
    fn zero_budget_is_empty_for_every_selector() {
        let e = LiveGraphEnsemble::sample(myopic_gap(), 10, 0).unwrap();
        for kind in [SelectorKind::Greedy, SelectorKind::DegreeDiscount, SelectorKind::Irie] {
            assert!(select_seeds(&e, None, 0, &SelectorSpec::of(kind)).unwrap().is_empty());
        }
    }

    #[test]
    fn greedy_on_myopic_gap_picks_c_first() {
        let e = LiveGraphEnsemble::sample(myopic_gap(), 2000, 1).unwrap();
        assert_eq!(greedy_celf(&e, &empty(5), 1), vec![2]);
    }

    #[test]
    fn greedy_covers_disjoint_components() {
        // two certain chains 0->1->2 and 3->4->5
        let g = WeightedDigraph::from_weighted_edges(6, &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 3, 0).unwrap();
        assert_eq!(greedy_celf(&e, &empty(6), 2), vec![0, 3]);
    }

    #[test]
    fn greedy_clamps_to_open_nodes() {
        let g = WeightedDigraph::from_edges(1, &[]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 4, 0).unwrap();
        assert_eq!(greedy_celf(&e, &empty(1), 5), vec![0]);
        let mut blocked = empty(6);
        blocked.insert_range(0..4);
        let g = generate::gnm(6, 12, 1).unwrap().uniform(0.5).unwrap();
        let e = LiveGraphEnsemble::sample(g, 8, 0).unwrap();
        let s = greedy_celf(&e, &blocked, 5);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|&v| v >= 4));
    }

    #[test]
    fn bitset_and_search_backends_agree() {
        for seed in 0..10 {
            let g = generate::gnm(14, 35, seed).unwrap().uniform(0.35).unwrap();
            let e = LiveGraphEnsemble::sample(g, 40, seed).unwrap();
            let mut blocked = empty(14);
            blocked.insert(seed as usize % 14);
            let mut a = Coverage::new(&e, &blocked);
            let mut b = Coverage::Search {
                ensemble: &e,
                covered: vec![blocked.clone(); e.len()],
            };
            for step in 0..3u32 {
                for v in 0..14 {
                    if !blocked.contains(v as usize) {
                        assert_eq!(a.gain(v), b.gain(v), "seed {seed} node {v}");
                    }
                }
                let pick = (step * 5 + 1) % 14;
                if !blocked.contains(pick as usize) {
                    a.add(pick);
                    b.add(pick);
                }
            }
        }
    }

    #[test]
    fn degree_discount_star() {
        let g =
            WeightedDigraph::from_weighted_edges(6, &[(0, 1, 0.1), (0, 2, 0.1), (0, 3, 0.1), (0, 4, 0.1), (0, 5, 0.1)])
                .unwrap();
        assert_eq!(degree_discount(&g, &empty(6), 1).unwrap(), vec![0]);
        assert_eq!(degree_discount(&g, &empty(6), 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn degree_discount_path_prefers_interior() {
        let g = WeightedDigraph::from_weighted_edges(3, &[(0, 1, 0.5), (1, 0, 0.5), (1, 2, 0.5), (2, 1, 0.5)]).unwrap();
        assert_eq!(degree_discount(&g, &empty(3), 1).unwrap(), vec![1]);
    }

    #[test]
    fn irie_rank_closed_form_on_certain_path() {
        let g = WeightedDigraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let spec = SelectorSpec {
            convergence_tol: 0.0,
            ..SelectorSpec::of(SelectorKind::Irie)
        };
        let a = spec.irie_alpha;
        let r = irie_rank(&g, &empty(3), &spec).unwrap();
        let expect = [1.0 + a * (1.0 + a), 1.0 + a, 1.0];
        for (x, y) in r.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn irie_rank_vanishing_alpha_is_flat() {
        let g = generate::gnm(12, 40, 3).unwrap().uniform(0.4).unwrap();
        let spec = SelectorSpec {
            irie_alpha: 1e-12,
            ..SelectorSpec::of(SelectorKind::Irie)
        };
        let mut blocked = empty(12);
        blocked.insert(3);
        let r = irie_rank(&g, &blocked, &spec).unwrap();
        for (v, x) in r.iter().enumerate() {
            let want = if v == 3 { 0.0 } else { 1.0 };
            assert!((x - want).abs() < 1e-9);
        }
    }

    #[test]
    fn fully_influenced_state_selects_nothing() {
        let g = generate::gnm(8, 20, 2).unwrap().uniform(0.2).unwrap();
        let e = LiveGraphEnsemble::sample(g, 5, 0).unwrap();
        let mut all = empty(8);
        all.insert_range(..);
        for kind in [SelectorKind::Greedy, SelectorKind::DegreeDiscount, SelectorKind::Irie] {
            assert!(select_seeds(&e, Some(&all), 3, &SelectorSpec::of(kind))
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn spec_validation() {
        let bad = SelectorSpec {
            irie_alpha: 1.0,
            ..SelectorSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SelectorSpec {
            irie_iterations: 0,
            ..SelectorSpec::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("irie".parse::<SelectorKind>().unwrap(), SelectorKind::Irie);
        assert!("foo".parse::<SelectorKind>().is_err());
    }
}
