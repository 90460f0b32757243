//! Heterogeneous local distances, weighted aggregation and the similarity
//! transform.
//!
//! Numeric and ordinal features use the standardized Euclidean distance
//! |a - b| / sigma, categorical features the overlap distance, and cyclic
//! features min(|a - b|, range - |a - b|). A missing operand yields the
//! feature's maximum observed local distance, so missing values dominate
//! every fully-present pair.

use serde::{Deserialize, Serialize};

use crate::case::{Case, Query};
use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema, FeatureValue};

/// Per-feature statistics of a case library, always computed on the
/// training portion of a fold, never on held-out queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBaseStats {
    /// Standard deviation per feature (sample, n-1 denominator), `None` for
    /// kinds that are not standardized and for degenerate constant features.
    pub sigma: Vec<Option<f64>>,
    /// Maximum local distance observed over all fully-present case pairs.
    /// Degenerate standardized features get 1.0.
    pub max_local_distance: Vec<f64>,
    /// Mean package price; the default adaptation budget.
    pub mean_price: f64,
    /// Mean structural similarity over all unordered case pairs.
    pub mean_structural_similarity: f64,
}

impl CaseBaseStats {
    pub fn sigma_of(&self, idx: usize) -> Option<f64> {
        self.sigma[idx]
    }
}

/// Local distance for the feature at `idx`, resolved by schema position.
///
/// Mismatches between the declared kind and the value shape are programming
/// errors once inputs are validated, and panic.
pub fn local_distance(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    idx: usize,
    a: &FeatureValue,
    b: &FeatureValue,
) -> f64 {
    if a.is_missing() || b.is_missing() {
        return stats.max_local_distance[idx];
    }
    let def = &schema.features[idx];
    match def.kind {
        FeatureKind::Numeric | FeatureKind::Ordinal { .. } => {
            let (x, y) = numeric_pair(def.name.as_str(), a, b);
            match stats.sigma[idx] {
                Some(sigma) => (x - y).abs() / sigma,
                // Constant feature in the training fold: overlap fallback.
                None => {
                    if x == y {
                        0.0
                    } else {
                        stats.max_local_distance[idx]
                    }
                }
            }
        }
        FeatureKind::Cyclic { range } => {
            let (x, y) = numeric_pair(def.name.as_str(), a, b);
            let d = (x - y).abs();
            d.min(range as f64 - d)
        }
        FeatureKind::Categorical => {
            let (x, y) = match (a, b) {
                (FeatureValue::Label(x), FeatureValue::Label(y)) => (x, y),
                _ => panic!("categorical feature '{}' holds non-label values", def.name),
            };
            if x == y {
                0.0
            } else {
                1.0
            }
        }
    }
}

fn numeric_pair<'v>(name: &str, a: &'v FeatureValue, b: &'v FeatureValue) -> (f64, f64) {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => (x, y),
        _ => panic!("numeric feature '{name}' holds non-numeric values"),
    }
}

/// Name-resolved variant of [`local_distance`].
pub fn local_distance_by_name(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    name: &str,
    a: &FeatureValue,
    b: &FeatureValue,
) -> Result<f64> {
    let idx = schema
        .index_of(name)
        .ok_or_else(|| Error::Schema(format!("unknown feature '{name}'")))?;
    Ok(local_distance(schema, stats, idx, a, b))
}

fn weighted_average(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    a: &[FeatureValue],
    b: &[FeatureValue],
    weight_of: impl Fn(usize) -> f64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..schema.len() {
        let w = weight_of(idx);
        if w > 0.0 {
            num += w * local_distance(schema, stats, idx, &a[idx], &b[idx]);
            den += w;
        }
    }
    debug_assert!(den > 0.0, "no positive weights; schema was not validated");
    num / den
}

/// Structural (problem-side) distance between two feature vectors.
pub fn structural_distance(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    a: &[FeatureValue],
    b: &[FeatureValue],
) -> f64 {
    weighted_average(schema, stats, a, b, |idx| {
        schema.features[idx].weight_structural
    })
}

pub fn structural_distance_cases(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    c1: &Case,
    c2: &Case,
) -> f64 {
    structural_distance(schema, stats, &c1.values, &c2.values)
}

pub fn structural_distance_query(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    q: &Query,
    c: &Case,
) -> f64 {
    structural_distance(schema, stats, &q.values, &c.values)
}

/// Solution-side distance between two stored cases (Price, Accommodation
/// and Destination under the default travel schema).
pub fn solution_distance(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    c1: &Case,
    c2: &Case,
) -> f64 {
    weighted_average(schema, stats, &c1.values, &c2.values, |idx| {
        schema.features[idx].weight_solution
    })
}

/// Similarity transform s = 1 / (1 + d), mapping distances into (0, 1].
pub fn similarity(d: f64) -> f64 {
    assert!(d >= 0.0, "similarity of a negative distance ({d})");
    1.0 / (1.0 + d)
}

pub fn structural_similarity_query(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    q: &Query,
    c: &Case,
) -> f64 {
    similarity(structural_distance_query(schema, stats, q, c))
}

pub fn solution_similarity(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    c1: &Case,
    c2: &Case,
) -> f64 {
    similarity(solution_distance(schema, stats, c1, c2))
}
