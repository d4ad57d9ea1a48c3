//! Weighted directed graphs, edge-list ingestion and influence-probability models.
//!
//! Edges are kept sorted by `(source, target)` so that the out-edges of a node form a
//! contiguous range of edge ids. Edge ids are the positions in that order and are what
//! live-graph bitmaps index into.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub mod generate;

/// Dense node identifier in `[0, n)`.
pub type NodeId = u32;

/// The three probabilities of the trivalency model.
pub const TRIVALENCY_LEVELS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeListOptions {
    /// Expand every line `u v` into the two arcs `u -> v` and `v -> u`.
    pub undirected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    labels: Vec<String>,
    sources: Vec<NodeId>,
    targets: Vec<NodeId>,
    probs: Vec<Option<f64>>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_edge_ids: Vec<usize>,
}

impl WeightedDigraph {
    /// Builds a graph over `n` nodes labelled `0..n`.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId, Option<f64>)]) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::build(labels, edges.to_vec())
    }

    /// Builds a graph over `n` nodes with every edge probability set.
    pub fn from_weighted_edges(n: usize, edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let edges: Vec<_> = edges.iter().map(|&(u, v, p)| (u, v, Some(p))).collect();
        Self::from_edges(n, &edges)
    }

    fn build(labels: Vec<String>, mut edges: Vec<(NodeId, NodeId, Option<f64>)>) -> Result<Self> {
        let n = labels.len();
        for &(u, v, p) in &edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) references a node outside [0, {n})"
                )));
            }
            if u == v {
                return Err(Error::SelfLoop(labels[u as usize].clone()));
            }
            if let Some(p) = p {
                check_probability(p)?;
            }
        }
        edges.sort_by_key(|&(u, v, _)| (u, v));
        for w in edges.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::DuplicateEdge {
                    source_id: labels[w[0].0 as usize].clone(),
                    target_id: labels[w[0].1 as usize].clone(),
                });
            }
        }

        let m = edges.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for &(u, v, _) in &edges {
            out_offsets[u as usize + 1] += 1;
            in_offsets[v as usize + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets.clone();
        let mut in_edge_ids = vec![0usize; m];
        for (e, &(_, v, _)) in edges.iter().enumerate() {
            in_edge_ids[cursor[v as usize]] = e;
            cursor[v as usize] += 1;
        }

        Ok(Self {
            labels,
            sources: edges.iter().map(|e| e.0).collect(),
            targets: edges.iter().map(|e| e.1).collect(),
            probs: edges.iter().map(|e| e.2).collect(),
            out_offsets,
            in_offsets,
            in_edge_ids,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Dense id of the node with the given original label.
    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label).map(|i| i as NodeId)
    }

    pub fn source(&self, edge: usize) -> NodeId {
        self.sources[edge]
    }

    pub fn target(&self, edge: usize) -> NodeId {
        self.targets[edge]
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn probability(&self, edge: usize) -> Option<f64> {
        self.probs[edge]
    }

    pub fn has_probabilities(&self) -> bool {
        self.probs.iter().all(Option::is_some)
    }

    /// All edge probabilities in edge-id order, or an error if any is unset.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        self.probs
            .iter()
            .map(|p| p.ok_or(Error::UnassignedProbabilities))
            .collect()
    }

    /// Mean probability over all edges (0 for an edgeless graph).
    pub fn mean_probability(&self) -> Result<f64> {
        let probs = self.probabilities()?;
        if probs.is_empty() {
            return Ok(0.0);
        }
        Ok(probs.iter().sum::<f64>() / probs.len() as f64)
    }

    /// Edge ids of the out-edges of `node`, ordered by target.
    pub fn out_edges(&self, node: NodeId) -> Range<usize> {
        self.out_offsets[node as usize]..self.out_offsets[node as usize + 1]
    }

    /// Edge ids of the in-edges of `node`.
    pub fn in_edges(&self, node: NodeId) -> &[usize] {
        &self.in_edge_ids[self.in_offsets[node as usize]..self.in_offsets[node as usize + 1]]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_edges(node).len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_edges(node).len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Option<f64>)> + '_ {
        (0..self.edge_count()).map(|e| (self.sources[e], self.targets[e], self.probs[e]))
    }

    /// Replaces every edge probability, in edge-id order.
    pub fn with_probabilities(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.edge_count() {
            return Err(Error::validation(format!(
                "expected {} probabilities, got {}",
                self.edge_count(),
                probs.len()
            )));
        }
        for &p in &probs {
            check_probability(p)?;
        }
        self.probs = probs.into_iter().map(Some).collect();
        Ok(self)
    }

    /// Weighted cascade: `p(u, v) = 1 / in_degree(v)`.
    pub fn weighted_cascade(mut self) -> Self {
        for e in 0..self.edge_count() {
            let indeg = self.in_degree(self.targets[e]);
            self.probs[e] = Some(1.0 / indeg as f64);
        }
        self
    }

    /// Trivalency: each probability drawn uniformly from [`TRIVALENCY_LEVELS`].
    pub fn trivalency(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.probs {
            *p = Some(TRIVALENCY_LEVELS[rng.gen_range(0..TRIVALENCY_LEVELS.len())]);
        }
        self
    }

    /// Sets every edge probability to `p`.
    pub fn uniform(mut self, p: f64) -> Result<Self> {
        check_probability(p)?;
        self.probs.iter_mut().for_each(|x| *x = Some(p));
        Ok(self)
    }

    /// Writes the edge list using dense ids, one `u v [p]` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (u, v, p) in self.edges() {
            match p {
                Some(p) => writeln!(w, "{u} {v} {p}")?,
                None => writeln!(w, "{u} {v}")?,
            }
        }
        Ok(())
    }

    /// Writes the sidecar id map, one `original-id dense-id` line per node.
    pub fn write_id_map<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(w, "{label} {i}")?;
        }
        Ok(())
    }

    /// Saves `path` (edge list) and `path.ids` (id map).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_edge_list(BufWriter::new(File::create(path)?))?;
        self.write_id_map(BufWriter::new(File::create(id_map_path(path))?))?;
        Ok(())
    }

    /// Loads a graph written by [`WeightedDigraph::save`].
    pub fn load_saved(path: &Path) -> Result<Self> {
        let edges = BufReader::new(File::open(path)?);
        let ids = BufReader::new(File::open(id_map_path(path))?);
        parse_with_id_map(edges, ids)
    }
}

/// The sidecar id-map path for a serialized edge list.
pub fn id_map_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    s.into()
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

struct Line<'a> {
    number: usize,
    source: &'a str,
    target: &'a str,
    prob: Option<f64>,
}

fn parse_line(number: usize, text: &str) -> Result<Option<Line<'_>>> {
    let text = text.trim();
    if text.is_empty() || text.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = text.split_whitespace().collect();
    let parse_err = |message: String| Error::Parse { line: number, message };
    let prob = match fields.len() {
        2 => None,
        3 => Some(
            fields[2]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("invalid probability {:?}", fields[2])))?,
        ),
        k => return Err(parse_err(format!("expected 2 or 3 fields, found {k}"))),
    };
    if let Some(p) = prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!(
                "line {number}: probability {p} outside [0, 1]"
            )));
        }
    }
    Ok(Some(Line {
        number,
        source: fields[0],
        target: fields[1],
        prob,
    }))
}

/// Parses a whitespace-separated edge list (`u v` or `u v p`, `#` comments).
///
/// Node ids may be arbitrary tokens; they are re-indexed densely in order of first
/// appearance and the originals kept as labels.
pub fn parse_edge_list<R: BufRead>(reader: R, opts: EdgeListOptions) -> Result<WeightedDigraph> {
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut seen = HashSet::new();

    let mut intern = |label: &str, labels: &mut Vec<String>| -> NodeId {
        *index.entry(label.to_owned()).or_insert_with(|| {
            labels.push(label.to_owned());
            (labels.len() - 1) as NodeId
        })
    };

    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let Some(line) = parse_line(i + 1, &text)? else {
            continue;
        };
        if line.source == line.target {
            return Err(Error::SelfLoop(line.source.to_owned()));
        }
        let u = intern(line.source, &mut labels);
        let v = intern(line.target, &mut labels);
        let arcs: &[(NodeId, NodeId)] = if opts.undirected { &[(u, v), (v, u)] } else { &[(u, v)] };
        for &(a, b) in arcs {
            if !seen.insert((a, b)) {
                return Err(Error::DuplicateEdge {
                    source_id: labels[a as usize].clone(),
                    target_id: labels[b as usize].clone(),
                });
            }
            edges.push((a, b, line.prob));
        }
    }
    WeightedDigraph::build(labels, edges)
}

pub fn load_edge_list(path: &Path, opts: EdgeListOptions) -> Result<WeightedDigraph> {
    parse_edge_list(BufReader::new(File::open(path)?), opts)
}

/// Parses a dense-id edge list together with its id map.
pub fn parse_with_id_map<R1: BufRead, R2: BufRead>(edges: R1, ids: R2) -> Result<WeightedDigraph> {
    let mut labels: Vec<Option<String>> = Vec::new();
    for (i, text) in ids.lines().enumerate() {
        let text = text?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [label, dense] = fields[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `original-id dense-id`".into(),
            });
        };
        let dense: usize = dense.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("invalid dense id {dense:?}"),
        })?;
        if dense >= labels.len() {
            labels.resize(dense + 1, None);
        }
        if labels[dense].replace(label.to_owned()).is_some() {
            return Err(Error::validation(format!("dense id {dense} mapped twice")));
        }
    }
    let labels: Vec<String> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::validation(format!("dense id {i} missing from id map"))))
        .collect::<Result<_>>()?;

    let mut parsed = Vec::new();
    for (i, text) in edges.lines().enumerate() {
        let text = text?;
        let Some(line) = parse_line(i + 1, &text)? else {
            continue;
        };
        let dense = |s: &str| -> Result<NodeId> {
            s.parse::<NodeId>().map_err(|_| Error::Parse {
                line: line.number,
                message: format!("expected a dense node id, found {s:?}"),
            })
        };
        parsed.push((dense(line.source)?, dense(line.target)?, line.prob));
    }
    WeightedDigraph::build(labels, parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<WeightedDigraph> {
        parse_edge_list(text.as_bytes(), EdgeListOptions::default())
    }

    #[test]
    fn two_edge_path_has_unset_probabilities() {
        let g = parse("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(!g.has_probabilities());
        assert!(matches!(g.probabilities(), Err(Error::UnassignedProbabilities)));
    }

    #[test]
    fn duplicate_edge_is_rejected() {
        let err = parse("0 1 0.5\n0 1 0.4").unwrap_err();
        match err {
            Error::DuplicateEdge { source_id, target_id } => {
                assert_eq!((source_id.as_str(), target_id.as_str()), ("0", "1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("# header\n0 1\n0 1 2 3").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse("0 1 abc").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn out_of_range_probability_and_self_loop_are_rejected() {
        assert!(matches!(parse("0 1 1.5"), Err(Error::Validation(_))));
        assert!(matches!(parse("0 1 -0.1"), Err(Error::Validation(_))));
        assert!(matches!(parse("x x"), Err(Error::SelfLoop(_))));
    }

    #[test]
    fn string_ids_are_reindexed_by_first_appearance() {
        let g = parse("alice bob\nbob carol 0.2\n").unwrap();
        assert_eq!(g.labels(), ["alice", "bob", "carol"]);
        assert_eq!(g.node_by_label("carol"), Some(2));
        assert_eq!(g.probability(1), Some(0.2));
    }

    #[test]
    fn undirected_expansion_adds_reverse_arcs() {
        let g = parse_edge_list("a b\nb c".as_bytes(), EdgeListOptions { undirected: true }).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.in_degree(1), 2);
        assert_eq!(g.out_degree(1), 2);
        let dup = parse_edge_list("a b\nb a".as_bytes(), EdgeListOptions { undirected: true });
        assert!(matches!(dup, Err(Error::DuplicateEdge { .. })));
    }

    #[test]
    fn weighted_cascade_uses_in_degree() {
        // four sources into node 4, plus a single edge 4 -> 5
        let g = WeightedDigraph::from_edges(
            6,
            &[(0, 4, None), (1, 4, None), (2, 4, None), (3, 4, None), (4, 5, None)],
        )
        .unwrap()
        .weighted_cascade();
        for &e in g.in_edges(4) {
            assert_eq!(g.probability(e), Some(0.25));
        }
        assert_eq!(g.probability(g.in_edges(5)[0]), Some(1.0));
    }

    #[test]
    fn trivalency_is_seeded() {
        let g = WeightedDigraph::from_edges(4, &[(0, 1, None), (1, 2, None), (2, 3, None)]).unwrap();
        let a = g.clone().trivalency(7).probabilities().unwrap();
        let b = g.clone().trivalency(7).probabilities().unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| TRIVALENCY_LEVELS.contains(p)));
    }

    #[test]
    fn id_map_roundtrip_keeps_isolated_nodes() {
        let g = WeightedDigraph::from_edges(4, &[(2, 0, Some(0.3)), (0, 1, None)]).unwrap();
        let mut edges = Vec::new();
        let mut ids = Vec::new();
        g.write_edge_list(&mut edges).unwrap();
        g.write_id_map(&mut ids).unwrap();
        let back = parse_with_id_map(&edges[..], &ids[..]).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.node_count(), 4);
    }
}
