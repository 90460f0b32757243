//! Posterior beliefs on the metric MRF: mean-field, loopy belief
//! propagation, and an exact enumeration oracle for small components.
//!
//! Evidence is a clamped assignment of 1-based adaptation levels to nodes;
//! there are no unary potentials. All engines work per connected
//! component, so whole-graph inference equals per-component inference
//! concatenated, and all sweeps visit nodes in ascending order for
//! reproducibility.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrf::{MetricMrf, NodeId};

/// Observed node levels (1-based), as asserted by the adaptation engine.
pub type Evidence = BTreeMap<NodeId, usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferParams {
    /// Stop when the largest belief (or message) change in a sweep falls
    /// below this.
    pub tol: f64,
    /// Maximum sweeps per connected component.
    pub max_iter: usize,
    /// Mean-field damping: b ← (1−damping)·b_new + damping·b_old.
    pub damping: f64,
}

impl Default for InferParams {
    fn default() -> Self {
        InferParams {
            tol: 1e-6,
            max_iter: 200,
            damping: 0.0,
        }
    }
}

/// Per-node posterior beliefs; `bel[node][level-1]` is the probability of
/// that adaptation level given the evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub bel: Vec<Vec<f64>>,
    pub converged: bool,
    /// Sweeps used by the slowest component.
    pub iterations: usize,
}

impl Beliefs {
    pub fn level_prob(&self, node: NodeId, level: usize) -> f64 {
        self.bel[node][level - 1]
    }

    /// P(level ≤ a) for the collapse test of the cond() selector.
    pub fn cumulative_level_prob(&self, node: NodeId, a: usize) -> f64 {
        self.bel[node][..a].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceEngine {
    MeanField,
    LoopyBp,
    Exact,
}

impl FromStr for InferenceEngine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-field" | "mf" => Ok(InferenceEngine::MeanField),
            "loopy-bp" | "bp" => Ok(InferenceEngine::LoopyBp),
            "exact" => Ok(InferenceEngine::Exact),
            other => Err(Error::Config(format!(
                "unknown inference engine '{other}' (expected mean-field, loopy-bp or exact)"
            ))),
        }
    }
}

pub fn infer(
    mrf: &MetricMrf,
    evidence: &Evidence,
    engine: InferenceEngine,
    params: &InferParams,
) -> Result<Beliefs> {
    match engine {
        InferenceEngine::MeanField => mean_field(mrf, evidence, params),
        InferenceEngine::LoopyBp => loopy_bp(mrf, evidence, params),
        InferenceEngine::Exact => exact_marginals(mrf, evidence),
    }
}

fn check_evidence(mrf: &MetricMrf, evidence: &Evidence) -> Result<()> {
    for (&node, &level) in evidence {
        if node >= mrf.num_nodes() {
            return Err(Error::Mrf(format!(
                "evidence on unknown node {node} (graph has {})",
                mrf.num_nodes()
            )));
        }
        if !(1..=mrf.num_states).contains(&level) {
            return Err(Error::Mrf(format!(
                "evidence level {level} on node {node} outside 1..={}",
                mrf.num_states
            )));
        }
    }
    Ok(())
}

/// Point mass for an observed level (0-based state internally).
fn point_mass(l: usize, level: usize) -> Vec<f64> {
    let mut b = vec![0.0; l];
    b[level - 1] = 1.0;
    b
}

/// Unnormalized joint Π_edges Φ(x_n, x_m) of a full assignment of 1-based
/// levels (one per node).
pub fn joint_unnormalized(mrf: &MetricMrf, levels: &[usize]) -> f64 {
    debug_assert_eq!(levels.len(), mrf.num_nodes());
    let mut p = 1.0;
    for e in &mrf.edges {
        p *= crate::mrf::potential(e.s, levels[e.n], levels[e.m]);
    }
    p
}

/// Enumeration guards: component size per the state-space precondition,
/// plus a hard cap on the number of assignments.
const MAX_EXACT_NODES: usize = 16;
const MAX_EXACT_ASSIGNMENTS: u128 = 1 << 27;

/// Exact marginals by evidence-constrained enumeration, per component.
pub fn exact_marginals(mrf: &MetricMrf, evidence: &Evidence) -> Result<Beliefs> {
    check_evidence(mrf, evidence)?;
    let l = mrf.num_states;
    let mut bel = vec![Vec::new(); mrf.num_nodes()];
    for (&node, &level) in evidence {
        bel[node] = point_mass(l, level);
    }
    for comp in mrf.connected_components() {
        let free: Vec<NodeId> = comp
            .iter()
            .copied()
            .filter(|n| !evidence.contains_key(n))
            .collect();
        if free.is_empty() {
            continue;
        }
        if comp.len() > MAX_EXACT_NODES {
            return Err(Error::EnumerationTooLarge {
                nodes: comp.len(),
                assignments: (l as u128).saturating_pow(free.len() as u32),
            });
        }
        let assignments = (l as u128).pow(free.len() as u32);
        if assignments > MAX_EXACT_ASSIGNMENTS {
            return Err(Error::EnumerationTooLarge {
                nodes: comp.len(),
                assignments,
            });
        }
        // Edges inside the component, endpoints resolved to either a free
        // slot or a fixed evidence state (0-based).
        let slot: HashMap<NodeId, usize> =
            free.iter().enumerate().map(|(p, &n)| (n, p)).collect();
        let end = |n: NodeId| -> (Option<usize>, usize) {
            match slot.get(&n) {
                Some(&p) => (Some(p), 0),
                None => (None, evidence[&n] - 1),
            }
        };
        let mut comp_edges = Vec::new();
        for &i in &comp {
            for &(j, s) in &mrf.neighbors[i] {
                if j > i {
                    comp_edges.push((end(i), end(j), s));
                }
            }
        }
        let log_joint = |states: &[usize]| -> f64 {
            let mut lp = 0.0;
            for &((sa, fa), (sb, fb), s) in &comp_edges {
                let xa = sa.map_or(fa, |p| states[p]);
                let xb = sb.map_or(fb, |p| states[p]);
                lp -= s * (xa as f64 - xb as f64).abs();
            }
            lp
        };
        // Two passes with a max-shift: find the largest log weight, then
        // accumulate normalized exponentials into per-slot state sums.
        let mut max_lp = f64::NEG_INFINITY;
        for_each_assignment(free.len(), l, |states| {
            max_lp = max_lp.max(log_joint(states));
        });
        let mut sums = vec![vec![0.0; l]; free.len()];
        let mut z = 0.0;
        for_each_assignment(free.len(), l, |states| {
            let w = (log_joint(states) - max_lp).exp();
            z += w;
            for (p, &x) in states.iter().enumerate() {
                sums[p][x] += w;
            }
        });
        for (p, &node) in free.iter().enumerate() {
            bel[node] = sums[p].iter().map(|v| v / z).collect();
        }
    }
    Ok(Beliefs {
        bel,
        converged: true,
        iterations: 0,
    })
}

/// Odometer over all `l^n` assignments of 0-based states, ascending.
fn for_each_assignment(n: usize, l: usize, mut f: impl FnMut(&[usize])) {
    let mut states = vec![0usize; n];
    loop {
        f(&states);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            states[pos] += 1;
            if states[pos] < l {
                break;
            }
            states[pos] = 0;
            pos += 1;
        }
    }
}

/// Mean-field inference: free nodes start uniform, evidence is clamped,
/// and nodes are updated in ascending order (Gauss-Seidel) with
/// b_i(x) ∝ exp(Σ_j Σ_{x_j} b_j(x_j)·log Φ_ij(x, x_j)).
pub fn mean_field(mrf: &MetricMrf, evidence: &Evidence, params: &InferParams) -> Result<Beliefs> {
    check_evidence(mrf, evidence)?;
    let l = mrf.num_states;
    let mut bel: Vec<Vec<f64>> = (0..mrf.num_nodes())
        .map(|n| match evidence.get(&n) {
            Some(&level) => point_mass(l, level),
            None => vec![1.0 / l as f64; l],
        })
        .collect();
    let mut converged = true;
    let mut iterations = 0;
    for comp in mrf.connected_components() {
        let free: Vec<NodeId> = comp
            .iter()
            .copied()
            .filter(|n| !evidence.contains_key(n))
            .collect();
        if free.is_empty() {
            continue;
        }
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut delta = 0.0_f64;
            for &i in &free {
                let mut t = vec![0.0; l];
                for &(j, s) in &mrf.neighbors[i] {
                    for (x, tx) in t.iter_mut().enumerate() {
                        for (xj, bj) in bel[j].iter().enumerate() {
                            *tx += bj * (-s * (x as f64 - xj as f64).abs());
                        }
                    }
                }
                let max_t = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut new: Vec<f64> = t.iter().map(|v| (v - max_t).exp()).collect();
                let z: f64 = new.iter().sum();
                for v in &mut new {
                    *v /= z;
                }
                if params.damping > 0.0 {
                    for (v, old) in new.iter_mut().zip(&bel[i]) {
                        *v = (1.0 - params.damping) * *v + params.damping * old;
                    }
                }
                for (v, old) in new.iter().zip(&bel[i]) {
                    delta = delta.max((v - old).abs());
                }
                bel[i] = new;
            }
            if delta < params.tol {
                break;
            }
            if sweeps >= params.max_iter {
                converged = false;
                break;
            }
        }
        iterations = iterations.max(sweeps);
    }
    Ok(Beliefs {
        bel,
        converged,
        iterations,
    })
}

/// Loopy belief propagation (sum-product) with normalized messages and
/// evidence as delta factors. Messages update in ascending (source,
/// target) order using the latest values.
pub fn loopy_bp(mrf: &MetricMrf, evidence: &Evidence, params: &InferParams) -> Result<Beliefs> {
    check_evidence(mrf, evidence)?;
    let l = mrf.num_states;
    let n = mrf.num_nodes();
    let psi = |i: NodeId, x: usize| -> f64 {
        match evidence.get(&i) {
            Some(&level) => (x == level - 1) as u8 as f64,
            None => 1.0,
        }
    };
    // Directed edges in update order; messages live in a flat table.
    let mut directed: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(2 * mrf.num_edges());
    for i in 0..n {
        for &(j, s) in &mrf.neighbors[i] {
            directed.push((i, j, s));
        }
    }
    let index: HashMap<(NodeId, NodeId), usize> = directed
        .iter()
        .enumerate()
        .map(|(idx, &(i, j, _))| ((i, j), idx))
        .collect();
    let mut msgs: Vec<Vec<f64>> = vec![vec![1.0 / l as f64; l]; directed.len()];
    let mut converged = true;
    let mut iterations = 0;
    for comp in mrf.connected_components() {
        let comp_dirs: Vec<usize> = directed
            .iter()
            .enumerate()
            .filter(|(_, (i, _, _))| comp.binary_search(i).is_ok())
            .map(|(idx, _)| idx)
            .collect();
        if comp_dirs.is_empty() {
            continue;
        }
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut delta = 0.0_f64;
            for &d in &comp_dirs {
                let (i, j, s) = directed[d];
                let mut new = vec![0.0; l];
                for (xj, out) in new.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for xi in 0..l {
                        let mut term = psi(i, xi) * crate::mrf::potential(s, xi, xj);
                        if term == 0.0 {
                            continue;
                        }
                        for &(k, _) in &mrf.neighbors[i] {
                            if k != j {
                                term *= msgs[index[&(k, i)]][xi];
                            }
                        }
                        acc += term;
                    }
                    *out = acc;
                }
                let z: f64 = new.iter().sum();
                for v in &mut new {
                    *v /= z;
                }
                for (v, old) in new.iter().zip(&msgs[d]) {
                    delta = delta.max((v - old).abs());
                }
                msgs[d] = new;
            }
            if delta < params.tol {
                break;
            }
            if sweeps >= params.max_iter {
                converged = false;
                break;
            }
        }
        iterations = iterations.max(sweeps);
    }
    let mut bel = Vec::with_capacity(n);
    for i in 0..n {
        let mut b: Vec<f64> = (0..l).map(|x| psi(i, x)).collect();
        for &(k, _) in &mrf.neighbors[i] {
            for (x, v) in b.iter_mut().enumerate() {
                *v *= msgs[index[&(k, i)]][x];
            }
        }
        let z: f64 = b.iter().sum();
        for v in &mut b {
            *v /= z;
        }
        bel.push(b);
    }
    Ok(Beliefs {
        bel,
        converged,
        iterations,
    })
}
