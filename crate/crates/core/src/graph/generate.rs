//! Seeded synthetic graphs for tests, benchmarks and capacity checks.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeId, WeightedDigraph};
use crate::error::{Error, Result};

/// Uniform random digraph with exactly `m` distinct arcs and no self-loops.
pub fn gnm(n: usize, m: usize, seed: u64) -> Result<WeightedDigraph> {
    let max = n.saturating_mul(n.saturating_sub(1));
    if m > max {
        return Err(Error::validation(format!("{m} arcs do not fit in {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.gen_range(0..n) as NodeId;
        let v = rng.gen_range(0..n) as NodeId;
        if u != v && seen.insert((u, v)) {
            edges.push((u, v, None));
        }
    }
    WeightedDigraph::from_edges(n, &edges)
}

/// Undirected preferential-attachment graph (each new node links to `links` existing
/// nodes chosen proportionally to degree), expanded into arcs in both directions.
pub fn preferential_attachment(n: usize, links: usize, seed: u64) -> Result<WeightedDigraph> {
    if links == 0 || n <= links {
        return Err(Error::validation("preferential attachment needs n > links >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut endpoints: Vec<NodeId> = Vec::new();
    let mut edges = Vec::new();
    // start from a clique on links + 1 nodes
    for u in 0..=links as NodeId {
        for v in 0..u {
            edges.push((u, v, None));
            edges.push((v, u, None));
            endpoints.extend([u, v]);
        }
    }
    for u in (links + 1) as NodeId..n as NodeId {
        let mut chosen = HashSet::new();
        while chosen.len() < links {
            chosen.insert(endpoints[rng.gen_range(0..endpoints.len())]);
        }
        let mut chosen: Vec<_> = chosen.into_iter().collect();
        chosen.sort_unstable();
        for v in chosen {
            edges.push((u, v, None));
            edges.push((v, u, None));
            endpoints.extend([u, v]);
        }
    }
    WeightedDigraph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gnm_has_requested_size() {
        let g = gnm(50, 120, 3).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (50, 120));
        assert_eq!(g, gnm(50, 120, 3).unwrap());
        assert!(gnm(3, 7, 0).is_err());
    }

    #[test]
    fn preferential_attachment_is_symmetric() {
        let g = preferential_attachment(100, 2, 9).unwrap();
        assert_eq!(g.edge_count(), 2 * (3 + 97 * 2));
        for (u, v, _) in g.edges() {
            assert!(g.out_edges(v).any(|e| g.target(e) == u));
        }
    }
}
