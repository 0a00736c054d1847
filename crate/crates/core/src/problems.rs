//! Weighted Max-Cut instances.
//!
//! Text format: the first non-comment line holds the node count, each
//! following nonempty line is `i j weight` (0-based nodes, single spaces).
//! Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, weight: f64) -> Self {
        Self { i, j, weight }
    }
}

/// Undirected weighted graph. Edges are stored with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i == e.j {
                return Err(Error::SelfLoop(e.i));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if j >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references node {j} but the graph has {n_nodes} nodes"
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-positive weight {}",
                    e.weight
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::DuplicateEdge(i, j));
            }
            normalized.push(Edge::new(i, j, e.weight));
        }
        Ok(Self {
            n_nodes,
            edges: normalized,
        })
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.n_nodes,
            self.edges
                .iter()
                .map(|e| Edge::new(e.i, e.j, e.weight * factor))
                .collect(),
        )
    }
}

pub fn max_edges(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Samples `n_edges` distinct node pairs uniformly, with weights uniform in
/// `weight_range`. Edges come back sorted by `(i, j)`.
pub fn random_graph(n_nodes: usize, n_edges: usize, weight_range: (f64, f64), seed: u64) -> Result<Graph> {
    let max = max_edges(n_nodes);
    if n_edges > max {
        return Err(Error::InfeasibleEdgeCount {
            n_nodes,
            requested: n_edges,
            max,
        });
    }
    let (lo, hi) = weight_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidConfig(format!(
            "weight range [{lo}, {hi}] must be positive and ordered"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..n_nodes)
        .flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j)))
        .collect();
    let (chosen, _) = pairs.partial_shuffle(&mut rng, n_edges);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    let edges = chosen
        .into_iter()
        .map(|(i, j)| {
            let w = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            Edge::new(i, j, w)
        })
        .collect();
    Graph::new(n_nodes, edges)
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut n_nodes: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    let mut lines_of = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if n_nodes.is_none() {
            let n = line.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("expected node count, found '{line}'"),
            })?;
            n_nodes = Some((n, line_no));
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 'i j weight', found '{line}'"),
            });
        }
        let parse_node = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid node index '{s}'"),
            })
        };
        let i = parse_node(fields[0])?;
        let j = parse_node(fields[1])?;
        let weight = fields[2].parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid weight '{}'", fields[2]),
        })?;
        edges.push(Edge::new(i, j, weight));
        lines_of.push(line_no);
    }
    let (n, header_line) = n_nodes.ok_or(Error::Parse {
        line: 1,
        message: "missing node count".into(),
    })?;
    // validate edge by edge so errors carry the offending line
    let mut seen = HashSet::new();
    for (e, &line) in edges.iter().zip(&lines_of) {
        if e.i == e.j {
            return Err(Error::Parse {
                line,
                message: Error::SelfLoop(e.i).to_string(),
            });
        }
        let key = (e.i.min(e.j), e.i.max(e.j));
        if !seen.insert(key) {
            return Err(Error::Parse {
                line,
                message: Error::DuplicateEdge(key.0, key.1).to_string(),
            });
        }
    }
    Graph::new(n, edges).map_err(|e| Error::Parse {
        line: header_line,
        message: e.to_string(),
    })
}

/// Writes weights with 17 significant digits so parsing is exact.
pub fn serialize_graph(graph: &Graph) -> String {
    let mut out = String::new();
    writeln!(out, "{}", graph.n_nodes()).unwrap();
    for e in graph.edges() {
        writeln!(out, "{} {} {:.16e}", e.i, e.j, e.weight).unwrap();
    }
    out
}
