//! The metric Markov random field over a case library.
//!
//! Nodes are cases; an edge joins two cases whenever their solution
//! similarity exceeds the threshold `st`, and carries that similarity as
//! its weight. Edge potentials decay exponentially in the gap between the
//! adaptation levels at the two ends, so neighboring cases pull each other
//! toward nearby levels. There are no unary potentials: observed levels
//! enter inference as clamped evidence.

use std::fmt::Write as _;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::case::{Case, CaseId};
use crate::distance::{similarity, solution_distance, CaseBaseStats};
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// Node index within the MRF (position in the library slice the graph was
/// built over).
pub type NodeId = usize;

/// Undirected edge, stored once with `n < m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfEdge {
    pub n: NodeId,
    pub m: NodeId,
    /// Solution similarity of the endpoints; the metric weight.
    pub s: f64,
}

/// Edge potential exp(−s·|i−j|) for states i, j (level indices; only the
/// gap matters).
pub fn potential(s: f64, i: usize, j: usize) -> f64 {
    (-s * (i as f64 - j as f64).abs()).exp()
}

#[derive(Debug, Clone)]
pub struct MetricMrf {
    /// Number of adaptation levels l; states are 1..=l.
    pub num_states: usize,
    /// Similarity threshold the graph was built with.
    pub st: f64,
    /// Node index -> case id of the underlying library.
    pub node_ids: Vec<CaseId>,
    /// Edges with n < m, sorted lexicographically.
    pub edges: Vec<MrfEdge>,
    /// Node index -> (neighbor, edge weight), ascending by neighbor.
    pub neighbors: Vec<Vec<(NodeId, f64)>>,
}

impl MetricMrf {
    /// Builds a graph from an explicit edge list (tests, parsing, demos).
    /// Edges are normalized to `n < m`; self-edges and out-of-range weights
    /// are rejected.
    pub fn from_edges(
        num_states: usize,
        st: f64,
        num_nodes: usize,
        node_ids: Option<Vec<CaseId>>,
        edges: &[(NodeId, NodeId, f64)],
    ) -> Result<MetricMrf> {
        if num_states < 2 {
            return Err(Error::Mrf(format!(
                "need at least 2 adaptation levels, got {num_states}"
            )));
        }
        let node_ids = node_ids.unwrap_or_else(|| (0..num_nodes as CaseId).collect());
        if node_ids.len() != num_nodes {
            return Err(Error::Mrf("node id list does not match node count".into()));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b, s) in edges {
            if a == b {
                return Err(Error::Mrf(format!("self-edge on node {a}")));
            }
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Mrf(format!("edge ({a}, {b}) outside 0..{num_nodes}")));
            }
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Mrf(format!("edge weight {s} outside (0, 1]")));
            }
            normalized.push(MrfEdge {
                n: a.min(b),
                m: a.max(b),
                s,
            });
        }
        normalized.sort_by_key(|e| (e.n, e.m));
        for w in normalized.windows(2) {
            if w[0].n == w[1].n && w[0].m == w[1].m {
                return Err(Error::Mrf(format!(
                    "duplicate edge ({}, {})",
                    w[0].n, w[0].m
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for e in &normalized {
            neighbors[e.n].push((e.m, e.s));
            neighbors[e.m].push((e.n, e.s));
        }
        for adj in &mut neighbors {
            adj.sort_by_key(|&(j, _)| j);
        }
        Ok(MetricMrf {
            num_states,
            st,
            node_ids,
            edges: normalized,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Connected components as sorted node lists, ordered by smallest
    /// member. Inference runs independently per component.
    pub fn connected_components(&self) -> Vec<Vec<NodeId>> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(i) = stack.pop() {
                comp.push(i);
                for &(j, _) in &self.neighbors[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    /// Serializes to the text edge-list format: a header with the level
    /// count, threshold and node count, then one `n m s` line per edge
    /// (case ids, weight to six decimals).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "l={} st={:.6} nodes={}",
            self.num_states,
            self.st,
            self.num_nodes()
        );
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{} {} {:.6}",
                self.node_ids[e.n], self.node_ids[e.m], e.s
            );
        }
        out
    }

    /// Parses the [`dump`](Self::dump) format. Node ids must be dense
    /// (0..nodes), as produced when dumping a graph over a full case base.
    pub fn parse(text: &str) -> Result<MetricMrf> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Mrf("empty MRF dump".into()))?;
        let mut l = None;
        let mut st = None;
        let mut nodes = None;
        for part in header.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Mrf(format!("malformed header field '{part}'")))?;
            match key {
                "l" => l = Some(value.parse::<usize>()),
                "st" => st = Some(value.parse::<f64>().map(|v| v as f64)),
                "nodes" => nodes = Some(value.parse::<usize>()),
                other => return Err(Error::Mrf(format!("unknown header field '{other}'"))),
            }
        }
        let bad = |what: &str| Error::Mrf(format!("header is missing or malformed: {what}"));
        let l = l.ok_or_else(|| bad("l"))?.map_err(|_| bad("l"))?;
        let st = match st {
            Some(Ok(v)) => v,
            _ => return Err(bad("st")),
        };
        let nodes = nodes.ok_or_else(|| bad("nodes"))?.map_err(|_| bad("nodes"))?;
        let mut edges = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse_err = || Error::Mrf(format!("malformed edge line {}: '{line}'", ln + 2));
            let n: usize = it.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
            let m: usize = it.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
            let s: f64 = it.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
            if it.next().is_some() {
                return Err(parse_err());
            }
            edges.push((n, m, s));
        }
        MetricMrf::from_edges(l, st, nodes, None, &edges)
    }

    /// Checks the potential-table invariants for every edge: Φ(i,i)=1,
    /// 0 < Φ ≤ 1, symmetry in the state pair, and weights inside (st, 1].
    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if !(e.s > self.st && e.s <= 1.0) {
                return Err(Error::Mrf(format!(
                    "edge ({}, {}) weight {} outside ({}, 1]",
                    e.n, e.m, e.s, self.st
                )));
            }
            for i in 0..self.num_states {
                if potential(e.s, i, i) != 1.0 {
                    return Err(Error::Mrf("diagonal potential is not 1".into()));
                }
                for j in 0..self.num_states {
                    let p = potential(e.s, i, j);
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::Mrf(format!("potential {p} outside (0, 1]")));
                    }
                    if p != potential(e.s, j, i) {
                        return Err(Error::Mrf("potential table asymmetric".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the metric MRF over a library: one node per case, an edge for
/// every pair whose solution similarity exceeds `st`.
pub fn build_mrf(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    library: &[Case],
    st: f64,
    num_states: usize,
) -> Result<MetricMrf> {
    if num_states < 2 {
        return Err(Error::Mrf(format!(
            "need at least 2 adaptation levels, got {num_states}"
        )));
    }
    if st >= 1.0 {
        log::warn!("solution-similarity threshold {st} >= 1 yields an edgeless graph");
    }
    let n = library.len();
    let row = |i: usize| -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for j in i + 1..n {
            let s = similarity(solution_distance(schema, stats, &library[i], &library[j]));
            if s > st {
                out.push((i, j, s));
            }
        }
        out
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n).into_par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n).map(row).collect();
    let edges: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    let node_ids = library.iter().map(|c| c.id).collect();
    MetricMrf::from_edges(num_states, st, n, Some(node_ids), &edges)
}
