//! Shared fixtures for the criterion benches.

use phasewise::graph::generate;
use phasewise::{LiveGraphEnsemble, WeightedDigraph};

/// Weighted-cascade preferential-attachment graph.
pub fn wc_graph(nodes: usize, links: usize, seed: u64) -> WeightedDigraph {
    generate::preferential_attachment(nodes, links, seed)
        .expect("valid generator parameters")
        .weighted_cascade()
}

pub fn ensemble(nodes: usize, links: usize, samples: usize) -> LiveGraphEnsemble {
    LiveGraphEnsemble::sample(wc_graph(nodes, links, 1), samples, 7).expect("probabilities assigned")
}
