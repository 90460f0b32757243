//! Retrieval strategies: plain structural kNN, the belief-threshold
//! selector cond(), MRF candidate generation from retrieved-case evidence,
//! and the hybrid strategy that tops up the adaptable part of a kNN result
//! with inferred-adaptable cases.

use std::fmt;

use crate::adapt::{adapt, level_of, AcceptanceModel, LevelMapping};
use crate::case::{Case, CaseId, Query};
use crate::distance::{structural_similarity_query, CaseBaseStats};
use crate::error::{Error, Result};
use crate::infer::{infer, Beliefs, Evidence, InferParams, InferenceEngine};
use crate::mrf::{MetricMrf, NodeId};
use crate::schema::{FeatureSchema, TravelFields};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Knn,
    Mrf,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Knn => write!(f, "KNN"),
            Source::Mrf => write!(f, "MRF"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCase {
    pub case_id: CaseId,
    /// Structural similarity to the query.
    pub similarity: f64,
    pub source: Source,
    /// Adaptation level asserted for this case: adjudicated by the rule
    /// engine for kNN entries, by cond() for MRF entries; absent for plain
    /// kNN output.
    pub asserted_level: Option<usize>,
}

/// Belief-vector selector deciding whether (and at which level) a free
/// node qualifies as a candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CondSpec {
    /// Most probable level; ties resolve to the lowest level.
    ArgMax,
    /// Level `a` when P(level ≤ a) exceeds `pt`, otherwise nothing.
    ThresholdCollapse { a: usize, pt: f64 },
}

impl CondSpec {
    pub fn validate(&self, num_states: usize) -> Result<()> {
        if let CondSpec::ThresholdCollapse { a, pt } = self {
            if !(1..=num_states).contains(a) {
                return Err(Error::Config(format!(
                    "collapse level {a} outside 1..={num_states}"
                )));
            }
            if !(*pt > 0.0 && *pt < 1.0) {
                return Err(Error::Config(format!("pt = {pt} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Applies the selector to a normalized belief vector; returns the
/// asserted 1-based level or `None`.
pub fn cond(bel: &[f64], spec: &CondSpec) -> Option<usize> {
    match spec {
        CondSpec::ArgMax => {
            let mut best = 0;
            for (i, v) in bel.iter().enumerate().skip(1) {
                if *v > bel[best] {
                    best = i;
                }
            }
            Some(best + 1)
        }
        CondSpec::ThresholdCollapse { a, pt } => {
            let mass: f64 = bel[..*a].iter().sum();
            (mass > *pt).then_some(*a)
        }
    }
}

/// All library positions ranked by structural similarity to the query,
/// descending, ties by ascending case id.
pub fn rank_all(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    q: &Query,
    library: &[Case],
) -> Vec<(NodeId, f64)> {
    let mut ranked: Vec<(NodeId, f64)> = library
        .iter()
        .enumerate()
        .map(|(pos, c)| (pos, structural_similarity_query(schema, stats, q, c)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| library[a.0].id.cmp(&library[b.0].id))
    });
    ranked
}

/// Plain structural kNN over the library.
pub fn knn_retrieve(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    q: &Query,
    library: &[Case],
    k: usize,
) -> Result<Vec<RankedCase>> {
    if library.is_empty() {
        return Err(Error::Retrieval("empty case library".into()));
    }
    if k == 0 || k > library.len() {
        return Err(Error::Retrieval(format!(
            "k = {k} outside 1..={}",
            library.len()
        )));
    }
    Ok(rank_all(schema, stats, q, library)
        .into_iter()
        .take(k)
        .map(|(pos, sim)| RankedCase {
            case_id: library[pos].id,
            similarity: sim,
            source: Source::Knn,
            asserted_level: None,
        })
        .collect())
}

/// Candidate cases produced by inference over the retrieved-case evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// (node, asserted level) for every non-evidenced node passing cond,
    /// ascending by node.
    pub candidates: Vec<(NodeId, usize)>,
    pub converged: bool,
}

/// Runs inference with the retrieved levels as evidence and applies the
/// selector to every non-evidenced node.
pub fn mrf_candidates(
    mrf: &MetricMrf,
    retrieved_levels: &Evidence,
    spec: &CondSpec,
    engine: InferenceEngine,
    params: &InferParams,
) -> Result<CandidateSet> {
    if retrieved_levels.is_empty() {
        return Err(Error::Retrieval("no retrieved levels to assert".into()));
    }
    spec.validate(mrf.num_states)?;
    let beliefs: Beliefs = infer(mrf, retrieved_levels, engine, params)?;
    let mut candidates = Vec::new();
    for node in 0..mrf.num_nodes() {
        if retrieved_levels.contains_key(&node) {
            continue;
        }
        if let Some(level) = cond(&beliefs.bel[node], spec) {
            candidates.push((node, level));
        }
    }
    Ok(CandidateSet {
        candidates,
        converged: beliefs.converged,
    })
}

/// Budget and acceptance context shared by every adaptation during one
/// retrieval.
#[derive(Debug, Clone, Copy)]
pub struct AdaptationContext<'a> {
    pub budget: f64,
    pub accept: &'a AcceptanceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgrOutput {
    pub cases: Vec<RankedCase>,
    /// k′: how many kNN cases adapted cleanly.
    pub adaptable_knn: usize,
    /// False when inference ran and failed to converge; true otherwise.
    pub converged: bool,
}

/// The hybrid strategy: retrieve k nearest cases, adapt each (binary
/// levels), and when k′ < k are adaptable, assert all k levels as MRF
/// evidence and fill the gap with the best inferred-adaptable cases by
/// structural similarity. Unadaptable kNN cases are dropped, so the
/// result may be shorter than k when candidates run out.
#[allow(clippy::too_many_arguments)]
pub fn agr_retrieve(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    fields: &TravelFields,
    q: &Query,
    library: &[Case],
    mrf: &MetricMrf,
    k: usize,
    spec: &CondSpec,
    engine: InferenceEngine,
    params: &InferParams,
    ctx: &AdaptationContext,
) -> Result<AgrOutput> {
    if mrf.num_nodes() != library.len() {
        return Err(Error::Retrieval(format!(
            "MRF has {} nodes but the library has {} cases",
            mrf.num_nodes(),
            library.len()
        )));
    }
    if mrf.num_states != LevelMapping::Binary.num_levels() {
        return Err(Error::Retrieval(format!(
            "hybrid retrieval asserts binary levels but the MRF has {} states",
            mrf.num_states
        )));
    }
    let ranked = rank_all(schema, stats, q, library);
    if library.is_empty() || k == 0 || k > library.len() {
        return Err(Error::Retrieval(format!(
            "k = {k} outside 1..={}",
            library.len()
        )));
    }
    let top_k = &ranked[..k];
    let mut evidence = Evidence::new();
    let mut keepers = Vec::new();
    for &(pos, sim) in top_k {
        let outcome = adapt(fields, &library[pos], q, ctx.budget, ctx.accept, library);
        let level = level_of(&outcome, LevelMapping::Binary);
        evidence.insert(pos, level);
        if level == 1 {
            keepers.push(RankedCase {
                case_id: library[pos].id,
                similarity: sim,
                source: Source::Knn,
                asserted_level: Some(level),
            });
        }
    }
    let adaptable_knn = keepers.len();
    if adaptable_knn == k {
        return Ok(AgrOutput {
            cases: keepers,
            adaptable_knn,
            converged: true,
        });
    }
    let set = mrf_candidates(mrf, &evidence, spec, engine, params)?;
    let sim_of: Vec<f64> = {
        let mut v = vec![0.0; library.len()];
        for &(pos, sim) in &ranked {
            v[pos] = sim;
        }
        v
    };
    let mut survivors = set.candidates;
    survivors.sort_by(|a, b| {
        sim_of[b.0]
            .partial_cmp(&sim_of[a.0])
            .unwrap()
            .then_with(|| library[a.0].id.cmp(&library[b.0].id))
    });
    for &(pos, level) in survivors.iter().take(k - adaptable_knn) {
        keepers.push(RankedCase {
            case_id: library[pos].id,
            similarity: sim_of[pos],
            source: Source::Mrf,
            asserted_level: Some(level),
        });
    }
    Ok(AgrOutput {
        cases: keepers,
        adaptable_knn,
        converged: set.converged,
    })
}
