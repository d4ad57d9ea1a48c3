//! Presampled live-graph ensembles.
//!
//! A live graph keeps each edge `(u, v)` independently with probability `p(u, v)`;
//! diffusion from a seed set is reachability in it. All budget splits and phase counts
//! are evaluated on one common ensemble so their statistics are directly comparable.
//!
//! Each live graph is stored as an edge-presence bitmap over the base graph's edge ids.
//! Live graph `i` draws its coins from its own ChaCha stream keyed by `(master_seed, i)`,
//! so the ensemble does not depend on sampling order or worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{NodeId, WeightedDigraph};
use crate::stats::Distribution;

const MAGIC: &[u8; 8] = b"PWLIVE01";

/// Seed-derivation domain for selector planning ensembles.
pub const PLANNING_DOMAIN: u64 = 0x706c_616e_6e69_6e67;

/// Mixes a domain tag into a master seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    let mut z = seed ^ domain.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn graph_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// The uniform coin values live graph `index` uses, one per edge id; edge `e` is live
/// iff `coins[e] < p(e)`.
pub fn edge_coins(master_seed: u64, index: usize, edge_count: usize) -> Vec<f64> {
    let mut rng = graph_rng(master_seed, index);
    (0..edge_count).map(|_| rng.gen::<f64>()).collect()
}

/// Strongly connected components of one live graph and the condensed DAG.
#[derive(Debug, Clone)]
pub struct Condensation {
    /// Component of each node. Components are numbered in reverse topological order:
    /// every DAG arc goes from a higher to a lower component id.
    pub component: Vec<u32>,
    member_offsets: Vec<u32>,
    members: Vec<NodeId>,
    dag_offsets: Vec<u32>,
    dag_targets: Vec<u32>,
}

impl Condensation {
    pub fn component_count(&self) -> usize {
        self.member_offsets.len() - 1
    }

    pub fn members(&self, c: u32) -> &[NodeId] {
        &self.members[self.member_offsets[c as usize] as usize..self.member_offsets[c as usize + 1] as usize]
    }

    pub fn successors(&self, c: u32) -> &[u32] {
        &self.dag_targets[self.dag_offsets[c as usize] as usize..self.dag_offsets[c as usize + 1] as usize]
    }

    /// Builds the condensation of the graph with `n` nodes and successor function `succ`.
    pub fn build<F, I>(n: usize, succ: F) -> Self
    where
        F: Fn(NodeId) -> I,
        I: Iterator<Item = NodeId>,
    {
        let component = tarjan(n, &succ);
        let count = component.iter().map(|&c| c as usize + 1).max().unwrap_or(0);

        let mut member_offsets = vec![0u32; count + 1];
        for &c in &component {
            member_offsets[c as usize + 1] += 1;
        }
        for c in 0..count {
            member_offsets[c + 1] += member_offsets[c];
        }
        let mut cursor = member_offsets.clone();
        let mut members = vec![0; n];
        for (v, &c) in component.iter().enumerate() {
            members[cursor[c as usize] as usize] = v as NodeId;
            cursor[c as usize] += 1;
        }

        let mut dag_offsets = vec![0u32; count + 1];
        let mut dag_targets = Vec::new();
        let mut stamp = vec![u32::MAX; count];
        for c in 0..count {
            for &v in &members[member_offsets[c] as usize..member_offsets[c + 1] as usize] {
                for w in succ(v) {
                    let d = component[w as usize];
                    if d as usize != c && stamp[d as usize] != c as u32 {
                        stamp[d as usize] = c as u32;
                        dag_targets.push(d);
                    }
                }
            }
            dag_offsets[c + 1] = dag_targets.len() as u32;
        }

        Self {
            component,
            member_offsets,
            members,
            dag_offsets,
            dag_targets,
        }
    }
}

/// Iterative Tarjan; components are emitted sinks-first.
fn tarjan<F, I>(n: usize, succ: &F) -> Vec<u32>
where
    F: Fn(NodeId) -> I,
    I: Iterator<Item = NodeId>,
{
    const UNVISITED: u32 = u32::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut component = vec![UNVISITED; n];
    let mut stack: Vec<NodeId> = Vec::new();
    let mut next_index = 0u32;
    let mut next_component = 0u32;
    let mut call: Vec<(NodeId, I)> = Vec::new();

    for root in 0..n as NodeId {
        if index[root as usize] != UNVISITED {
            continue;
        }
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        call.push((root, succ(root)));

        while let Some((v, iter)) = call.last_mut() {
            let v = *v;
            if let Some(w) = iter.next() {
                let wi = w as usize;
                if index[wi] == UNVISITED {
                    index[wi] = next_index;
                    low[wi] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    call.push((w, succ(w)));
                } else if on_stack[wi] {
                    low[v as usize] = low[v as usize].min(index[wi]);
                }
                continue;
            }
            call.pop();
            if let Some((parent, _)) = call.last() {
                let p = *parent as usize;
                low[p] = low[p].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    component[w as usize] = next_component;
                    if w == v {
                        break;
                    }
                }
                next_component += 1;
            }
        }
    }
    component
}

#[derive(Debug)]
pub struct LiveGraphEnsemble {
    graph: Arc<WeightedDigraph>,
    master_seed: u64,
    count: usize,
    words_per_graph: usize,
    bits: Vec<u64>,
    condensations: Vec<OnceLock<Condensation>>,
}

impl LiveGraphEnsemble {
    /// Samples `count` live graphs of `graph` from `master_seed`.
    pub fn sample(graph: impl Into<Arc<WeightedDigraph>>, count: usize, master_seed: u64) -> Result<Self> {
        let graph = graph.into();
        if count == 0 {
            return Err(Error::validation("ensemble size must be at least 1"));
        }
        let probs = graph.probabilities()?;
        let m = probs.len();
        let words = m.div_ceil(64);
        let per_graph: Vec<Vec<u64>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = graph_rng(master_seed, i);
                let mut row = vec![0u64; words];
                for (e, &p) in probs.iter().enumerate() {
                    if rng.gen::<f64>() < p {
                        row[e / 64] |= 1 << (e % 64);
                    }
                }
                row
            })
            .collect();
        Ok(Self::from_bits(graph, master_seed, count, per_graph.concat()))
    }

    fn from_bits(graph: Arc<WeightedDigraph>, master_seed: u64, count: usize, bits: Vec<u64>) -> Self {
        let words_per_graph = graph.edge_count().div_ceil(64);
        debug_assert_eq!(bits.len(), words_per_graph * count);
        Self {
            graph,
            master_seed,
            count,
            words_per_graph,
            bits,
            condensations: (0..count).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn graph(&self) -> &WeightedDigraph {
        &self.graph
    }

    pub fn shared_graph(&self) -> Arc<WeightedDigraph> {
        Arc::clone(&self.graph)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn row(&self, index: usize) -> &[u64] {
        &self.bits[index * self.words_per_graph..(index + 1) * self.words_per_graph]
    }

    /// Edge-presence bitmap of live graph `index` (bit `e` set iff edge `e` is live).
    pub fn bitmap(&self, index: usize) -> &[u64] {
        self.row(index)
    }

    pub fn is_live(&self, index: usize, edge: usize) -> bool {
        self.row(index)[edge / 64] >> (edge % 64) & 1 == 1
    }

    pub fn live_edge_count(&self, index: usize) -> usize {
        self.row(index).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Live out-neighbours of `node` in live graph `index`.
    pub fn live_successors(&self, index: usize, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let row = self.row(index);
        let targets = self.graph.targets();
        self.graph
            .out_edges(node)
            .filter(move |&e| row[e / 64] >> (e % 64) & 1 == 1)
            .map(move |e| targets[e])
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.count {
            return Err(Error::IndexOutOfRange { index, len: self.count });
        }
        Ok(())
    }

    /// SCC condensation of live graph `index`, built on first use.
    pub fn condensation(&self, index: usize) -> &Condensation {
        self.condensations[index]
            .get_or_init(|| Condensation::build(self.node_count(), |v| self.live_successors(index, v)))
    }

    /// All nodes reachable from `sources` in live graph `index`, sources included.
    pub fn reach(&self, index: usize, sources: &[NodeId]) -> Result<FixedBitSet> {
        self.check_index(index)?;
        let mut out = FixedBitSet::with_capacity(self.node_count());
        self.extend_closure(index, &mut out, sources);
        Ok(out)
    }

    /// Adds everything reachable from `seeds` to `closed`, which must already be
    /// reachability-closed in live graph `index`. Returns the number of nodes added.
    pub fn extend_closure(&self, index: usize, closed: &mut FixedBitSet, seeds: &[NodeId]) -> usize {
        let cond = self.condensation(index);
        let mut added = 0;
        let mut stack: Vec<u32> = Vec::new();
        for &s in seeds {
            if closed.contains(s as usize) {
                continue;
            }
            stack.push(cond.component[s as usize]);
            // claim the seed's component before exploring so it is not pushed twice
            for &v in cond.members(cond.component[s as usize]) {
                closed.insert(v as usize);
                added += 1;
            }
            while let Some(c) = stack.pop() {
                for &d in cond.successors(c) {
                    let first = cond.members(d)[0];
                    if closed.contains(first as usize) {
                        continue;
                    }
                    for &v in cond.members(d) {
                        closed.insert(v as usize);
                        added += 1;
                    }
                    stack.push(d);
                }
            }
        }
        added
    }

    /// Number of nodes reachable from `sources`, summed over all live graphs.
    pub fn total_reach(&self, sources: &[NodeId]) -> u64 {
        self.reach_sizes(sources).iter().sum()
    }

    /// Reach size from `sources` in every live graph.
    pub fn reach_sizes(&self, sources: &[NodeId]) -> Vec<u64> {
        (0..self.count)
            .into_par_iter()
            .map(|i| {
                let mut set = FixedBitSet::with_capacity(self.node_count());
                self.extend_closure(i, &mut set, sources) as u64
            })
            .collect()
    }

    /// Writes the ensemble in its binary form: magic, master seed, count, node and edge
    /// counts, a graph fingerprint, then one little-endian bitmap per live graph.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for x in [
            self.master_seed,
            self.count as u64,
            self.node_count() as u64,
            self.graph.edge_count() as u64,
            graph_fingerprint(&self.graph),
        ] {
            w.write_all(&x.to_le_bytes())?;
        }
        for word in &self.bits {
            w.write_all(&word.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(graph: impl Into<Arc<WeightedDigraph>>, mut r: R) -> Result<Self> {
        let graph = graph.into();
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::validation("not a live-graph ensemble file"));
        }
        let mut header = [0u64; 5];
        for h in &mut header {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *h = u64::from_le_bytes(buf);
        }
        let [master_seed, count, n, m, fingerprint] = header;
        if n as usize != graph.node_count() || m as usize != graph.edge_count() {
            return Err(Error::validation(format!(
                "ensemble was sampled on a graph with n={n}, m={m}"
            )));
        }
        if fingerprint != graph_fingerprint(&graph) {
            return Err(Error::validation("ensemble graph fingerprint does not match"));
        }
        let words = (m as usize).div_ceil(64) * count as usize;
        let mut bytes = vec![0u8; words * 8];
        r.read_exact(&mut bytes)?;
        let bits = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self::from_bits(graph, master_seed, count as usize, bits))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(graph: impl Into<Arc<WeightedDigraph>>, path: &Path) -> Result<Self> {
        Self::read_from(graph, BufReader::new(File::open(path)?))
    }

    /// True if both ensembles hold the same seed, size and edge bitmaps.
    pub fn same_samples(&self, other: &Self) -> bool {
        self.master_seed == other.master_seed && self.count == other.count && self.bits == other.bits
    }
}

/// FNV-1a over node count, edges and probability bit patterns.
pub fn graph_fingerprint(g: &WeightedDigraph) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    feed(g.node_count() as u64);
    for (u, v, p) in g.edges() {
        feed(u as u64);
        feed(v as u64);
        feed(p.map_or(u64::MAX, f64::to_bits));
    }
    h
}

/// Influenced nodes of every live graph at a phase boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub influenced: Vec<FixedBitSet>,
    pub phase: usize,
}

impl DiffusionState {
    /// Nothing influenced yet, phase 0.
    pub fn fresh(ensemble: &LiveGraphEnsemble) -> Self {
        Self {
            influenced: vec![FixedBitSet::with_capacity(ensemble.node_count()); ensemble.len()],
            phase: 0,
        }
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.influenced.iter().map(|s| s.count_ones(..) as u64).collect()
    }
}

/// Seeds `new_seeds[i]` into live graph `i` and closes the influenced sets under
/// reachability. Seeds that are already influenced are ignored.
pub fn advance_state(
    ensemble: &LiveGraphEnsemble,
    state: &DiffusionState,
    new_seeds: &[Vec<NodeId>],
) -> Result<DiffusionState> {
    if new_seeds.len() != ensemble.len() {
        return Err(Error::validation(format!(
            "expected seeds for {} live graphs, got {}",
            ensemble.len(),
            new_seeds.len()
        )));
    }
    let influenced = state
        .influenced
        .par_iter()
        .zip(new_seeds.par_iter())
        .enumerate()
        .map(|(i, (set, seeds))| {
            let mut next = set.clone();
            ensemble.extend_closure(i, &mut next, seeds);
            next
        })
        .collect();
    Ok(DiffusionState {
        influenced,
        phase: state.phase + 1,
    })
}

/// Distribution of influenced-set sizes over the live graphs.
pub fn spread_distribution(state: &DiffusionState) -> Distribution {
    Distribution::from_values(state.sizes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs(e: &LiveGraphEnsemble, i: usize, sources: &[NodeId]) -> Vec<bool> {
        let mut seen = vec![false; e.node_count()];
        let mut queue: VecDeque<NodeId> = sources.iter().copied().collect();
        for &s in sources {
            seen[s as usize] = true;
        }
        while let Some(u) = queue.pop_front() {
            for (e_id, v) in e.graph().out_edges(u).map(|x| (x, e.graph().target(x))) {
                if e.is_live(i, e_id) && !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn path(p: f64) -> WeightedDigraph {
        WeightedDigraph::from_weighted_edges(3, &[(0, 1, p), (1, 2, p)]).unwrap()
    }

    #[test]
    fn certain_and_impossible_edges() {
        let g = crate::graph::generate::gnm(12, 30, 1).unwrap();
        let all = LiveGraphEnsemble::sample(g.clone().uniform(1.0).unwrap(), 5, 3).unwrap();
        let none = LiveGraphEnsemble::sample(g.uniform(0.0).unwrap(), 5, 3).unwrap();
        for i in 0..5 {
            assert_eq!(all.live_edge_count(i), 30);
            assert_eq!(none.live_edge_count(i), 0);
        }
    }

    #[test]
    fn unassigned_probabilities_are_rejected() {
        let g = WeightedDigraph::from_edges(2, &[(0, 1, None)]).unwrap();
        assert!(matches!(
            LiveGraphEnsemble::sample(g, 3, 0),
            Err(Error::UnassignedProbabilities)
        ));
    }

    #[test]
    fn single_edge_presence_frequency() {
        let g = WeightedDigraph::from_weighted_edges(2, &[(0, 1, 0.5)]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 10_000, 42).unwrap();
        let live = (0..e.len()).filter(|&i| e.is_live(i, 0)).count() as f64 / 1e4;
        // binomial sd 0.005, 3 sigma
        assert!((live - 0.5).abs() <= 0.015, "{live}");
    }

    #[test]
    fn reach_on_full_path_and_empty_sources() {
        let e = LiveGraphEnsemble::sample(path(1.0), 1, 0).unwrap();
        assert_eq!(e.reach(0, &[]).unwrap().count_ones(..), 0);
        let r = e.reach(0, &[0]).unwrap();
        assert_eq!(r.ones().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(matches!(e.reach(1, &[0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn reach_matches_bfs_on_random_graphs() {
        for seed in 0..30 {
            let g = crate::graph::generate::gnm(10, 25, seed).unwrap().uniform(0.5).unwrap();
            let e = LiveGraphEnsemble::sample(g, 4, seed).unwrap();
            for i in 0..4 {
                for s in 0..10 {
                    let expect = bfs(&e, i, &[s]);
                    let got = e.reach(i, &[s]).unwrap();
                    for v in 0..10 {
                        assert_eq!(got.contains(v), expect[v]);
                    }
                }
            }
        }
    }

    #[test]
    fn condensation_groups_mutually_reachable_nodes() {
        let g = crate::graph::generate::gnm(15, 45, 5).unwrap().uniform(0.6).unwrap();
        let e = LiveGraphEnsemble::sample(g, 6, 9).unwrap();
        for i in 0..6 {
            let cond = e.condensation(i);
            let reach: Vec<Vec<bool>> = (0..15).map(|v| bfs(&e, i, &[v])).collect();
            for u in 0..15 {
                for v in 0..15 {
                    let same = cond.component[u] == cond.component[v];
                    assert_eq!(same, reach[u][v] && reach[v][u]);
                }
            }
            for c in 0..cond.component_count() as u32 {
                assert!(cond.successors(c).iter().all(|&d| d < c));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_edge_coins_match() {
        let g = crate::graph::generate::gnm(20, 60, 2).unwrap().weighted_cascade();
        let a = LiveGraphEnsemble::sample(g.clone(), 50, 77).unwrap();
        let b = LiveGraphEnsemble::sample(g.clone(), 50, 77).unwrap();
        assert!(a.same_samples(&b));
        let probs = g.probabilities().unwrap();
        for i in [0, 13, 49] {
            let coins = edge_coins(77, i, g.edge_count());
            for e in 0..g.edge_count() {
                assert_eq!(a.is_live(i, e), coins[e] < probs[e]);
            }
        }
    }

    #[test]
    fn persisted_ensemble_reloads_identically() {
        let g = Arc::new(crate::graph::generate::gnm(20, 70, 4).unwrap().trivalency(1));
        let e = LiveGraphEnsemble::sample(Arc::clone(&g), 33, 5).unwrap();
        let mut buf = Vec::new();
        e.write_to(&mut buf).unwrap();
        let back = LiveGraphEnsemble::read_from(Arc::clone(&g), &buf[..]).unwrap();
        assert!(e.same_samples(&back));
        let other = crate::graph::generate::gnm(20, 70, 5).unwrap().trivalency(1);
        assert!(LiveGraphEnsemble::read_from(other, &buf[..]).is_err());
    }

    #[test]
    fn advance_state_is_monotone_and_idempotent() {
        let g = crate::graph::generate::gnm(30, 80, 8).unwrap().uniform(0.3).unwrap();
        let e = LiveGraphEnsemble::sample(g, 20, 1).unwrap();
        let s0 = DiffusionState::fresh(&e);
        let none = vec![Vec::new(); 20];
        let s1 = advance_state(&e, &s0, &none).unwrap();
        assert_eq!(s1.influenced, s0.influenced);
        assert_eq!(s1.phase, 1);

        let seeds = vec![vec![0, 5]; 20];
        let s2 = advance_state(&e, &s1, &seeds).unwrap();
        let s3 = advance_state(&e, &s2, &seeds).unwrap();
        assert_eq!(s2.influenced, s3.influenced);
        let more = vec![vec![7]; 20];
        let s4 = advance_state(&e, &s3, &more).unwrap();
        for i in 0..20 {
            assert!(s4.influenced[i].is_superset(&s3.influenced[i]));
            // closure: every live successor of an influenced node is influenced
            for u in s4.influenced[i].ones() {
                for v in e.live_successors(i, u as NodeId) {
                    assert!(s4.influenced[i].contains(v as usize));
                }
            }
        }
    }

    #[test]
    fn single_edge_spread_distribution() {
        let g = WeightedDigraph::from_weighted_edges(2, &[(0, 1, 0.5)]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 4000, 11).unwrap();
        let s = advance_state(&e, &DiffusionState::fresh(&e), &vec![vec![0]; 4000]).unwrap();
        let d = spread_distribution(&s);
        assert_eq!(d.histogram.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        // exact distribution {1: 0.5, 2: 0.5}; sd of a frequency at M=4000 is ~0.0079
        assert!((d.frequency(2) - 0.5).abs() < 0.032);
    }

    #[test]
    fn certain_graph_gives_point_mass() {
        let g = crate::graph::generate::gnm(25, 60, 3).unwrap().uniform(1.0).unwrap();
        let e = LiveGraphEnsemble::sample(g, 10, 0).unwrap();
        let s = advance_state(&e, &DiffusionState::fresh(&e), &vec![vec![1, 2]; 10]).unwrap();
        let d = spread_distribution(&s);
        assert_eq!(d.histogram.len(), 1);
        assert_eq!(d.std_dev, 0.0);
    }
}
