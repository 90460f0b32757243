//! Cross-validated retrieval evaluation.
//!
//! Every library case is labeled positive for a query when its structural
//! similarity clears `thr = alpha * mu_c` and its solution adapts without
//! flags; retrieval strategies are then scored as binary classifiers over
//! the whole library. Folds rebuild stats, budget and the MRF from
//! training cases only, and held-out queries get missing values injected
//! before retrieval.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adapt::{adapt, level_of, AcceptanceModel, LevelMapping};
use crate::case::{Case, CaseId, Query};
use crate::dataset::{compute_stats, inject_missing, CaseBase, MissingnessProfile};
use crate::distance::{structural_similarity_query, CaseBaseStats};
use crate::error::{Error, Result};
use crate::infer::{InferParams, InferenceEngine};
use crate::mrf::{build_mrf, MetricMrf};
use crate::retrieval::{agr_retrieve, rank_all, AdaptationContext, CondSpec};
use crate::rng;
use crate::schema::{FeatureSchema, TravelFields};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Knn,
    Hybrid,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Knn => "knn",
            Strategy::Hybrid => "hybrid",
        })
    }
}

/// The k grid used throughout the experiments: dense to 15, then coarse.
pub fn full_k_grid() -> Vec<usize> {
    (1..=15).chain((20..=100).step_by(10)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
    pub folds: usize,
    /// Solution-similarity threshold for MRF edges.
    pub st: f64,
    /// Posterior mass required to assert a candidate adaptable.
    pub pt: f64,
    pub seed: u64,
    /// Probability that a proposed hotel is accepted.
    pub acceptance_p: f64,
    pub missingness: MissingnessProfile,
    pub engine: InferenceEngine,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alphas: vec![0.75, 0.95, 1.0, 1.25, 1.5],
            ks: full_k_grid(),
            folds: 10,
            st: 0.9,
            pt: 0.9,
            seed: 7,
            acceptance_p: 0.8,
            missingness: MissingnessProfile::default(),
            engine: InferenceEngine::MeanField,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds = {} < 2", self.folds)));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| a <= 0.0 || !a.is_finite()) {
            return Err(Error::Config("alphas must be positive".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("ks must all be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.st) || self.st <= 0.0 {
            return Err(Error::Config(format!("st = {} outside (0, 1]", self.st)));
        }
        if !(0.0..1.0).contains(&self.pt) || self.pt <= 0.0 {
            return Err(Error::Config(format!("pt = {} outside (0, 1)", self.pt)));
        }
        if !(0.0..=1.0).contains(&self.acceptance_p) {
            return Err(Error::Config(format!(
                "acceptance_p = {} outside [0, 1]",
                self.acceptance_p
            )));
        }
        self.missingness.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    /// |positives|; equals true_pos + false_neg.
    pub positives: usize,
    /// Library size; the four cells sum to it.
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    const ZERO: Metrics = Metrics {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn add(&mut self, other: &Metrics) {
        self.accuracy += other.accuracy;
        self.precision += other.precision;
        self.recall += other.recall;
        self.f1 += other.f1;
    }

    fn scaled(&self, by: f64) -> Metrics {
        Metrics {
            accuracy: self.accuracy * by,
            precision: self.precision * by,
            recall: self.recall * by,
            f1: self.f1 * by,
        }
    }
}

/// Scores a retrieved set against the positive set over a library of
/// `total` cases. Degenerate cells follow fixed conventions: precision is
/// 1 on an empty retrieval, recall is 1 when there are no positives, and
/// F1 is 0 when both terms vanish.
pub fn score(
    retrieved: &BTreeSet<CaseId>,
    positives: &BTreeSet<CaseId>,
    total: usize,
) -> (ConfusionCounts, Metrics) {
    let true_pos = retrieved.intersection(positives).count();
    let false_pos = retrieved.len() - true_pos;
    let false_neg = positives.len() - true_pos;
    let true_neg = total - true_pos - false_pos - false_neg;
    let counts = ConfusionCounts {
        true_pos,
        false_pos,
        false_neg,
        true_neg,
        positives: positives.len(),
        total,
    };
    let precision = if retrieved.is_empty() {
        1.0
    } else {
        true_pos as f64 / retrieved.len() as f64
    };
    let recall = if positives.is_empty() {
        1.0
    } else {
        true_pos as f64 / positives.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let metrics = Metrics {
        accuracy: (true_pos + true_neg) as f64 / total as f64,
        precision,
        recall,
        f1,
    };
    (counts, metrics)
}

/// Ground-truth relevant cases for a query: structural similarity at
/// least `thr` and a flag-free adaptation. Every library case is adapted
/// exhaustively; no retrieval strategy is consulted.
pub fn positive_set(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    fields: &TravelFields,
    q: &Query,
    library: &[Case],
    thr: f64,
    ctx: &AdaptationContext,
) -> BTreeSet<CaseId> {
    assert!(thr > 0.0, "positive-set threshold must be positive");
    library
        .iter()
        .filter(|c| structural_similarity_query(schema, stats, q, c) >= thr)
        .filter(|c| {
            let outcome = adapt(fields, c, q, ctx.budget, ctx.accept, library);
            level_of(&outcome, LevelMapping::Binary) == 1
        })
        .map(|c| c.id)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Retrieval size that produced the point; none for the synthetic
    /// endpoint.
    pub k: Option<usize>,
}

/// Orders per-k averages by recall and closes the curve with the
/// pessimistic endpoint (1, P/N), unless recall already reached 1 for
/// practical purposes.
pub fn pr_curve(mut points: Vec<PrPoint>, positive_rate: f64) -> Vec<PrPoint> {
    points.sort_by(|a, b| {
        a.recall
            .partial_cmp(&b.recall)
            .unwrap()
            .then_with(|| a.k.cmp(&b.k))
    });
    let max_recall = points.last().map_or(0.0, |p| p.recall);
    if max_recall < 0.999 {
        points.push(PrPoint {
            recall: 1.0,
            precision: positive_rate,
            k: None,
        });
    }
    points
}

/// Trapezoidal area under a recall-ordered PR curve.
pub fn auc(curve: &[PrPoint]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::Eval(format!(
            "AUC needs at least 2 curve points, got {}",
            curve.len()
        )));
    }
    let mut area = 0.0;
    for w in curve.windows(2) {
        debug_assert!(w[1].recall >= w[0].recall, "curve not sorted by recall");
        area += (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0;
    }
    Ok(area)
}

/// Splits case ids into `folds` near-equal parts by a seeded shuffle.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<CaseId>>> {
    if folds < 2 || folds > n {
        return Err(Error::Eval(format!("cannot split {n} cases into {folds} folds")));
    }
    let mut ids: Vec<CaseId> = (0..n as CaseId).collect();
    ids.shuffle(&mut rng::stream(seed, rng::salt::FOLDS, &[]));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(ids[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub strategy: Strategy,
    pub alpha: f64,
    pub k: usize,
    pub fold: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub strategy: Strategy,
    pub alpha: f64,
    pub k: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub strategy: Strategy,
    pub alpha: f64,
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Per-fold means of per-query metrics, one row per sweep cell.
    pub rows: Vec<MetricRow>,
    /// Cross-fold means, one row per (strategy, alpha, k).
    pub means: Vec<MeanRow>,
    /// One PR curve with its AUC per (strategy, alpha).
    pub curves: Vec<PrCurve>,
    /// Queries whose hybrid inference failed to converge.
    pub unconverged_queries: usize,
}

struct FoldCtx<'a> {
    schema: &'a FeatureSchema,
    fields: &'a TravelFields,
    cfg: &'a SweepConfig,
    library: &'a [Case],
    stats: &'a CaseBaseStats,
    mrf: &'a MetricMrf,
    budget: f64,
    accept: &'a AcceptanceModel,
}

struct QueryCell {
    /// Flattened [strategy][alpha][k] metrics for one query.
    metrics: Vec<Metrics>,
    /// P/N per alpha.
    pos_frac: Vec<f64>,
    unconverged: bool,
}

fn eval_query(ctx: &FoldCtx, q: &Query) -> Result<QueryCell> {
    let n_a = ctx.cfg.alphas.len();
    let n_k = ctx.cfg.ks.len();
    let cell = |s: usize, ai: usize, ki: usize| (s * n_a + ai) * n_k + ki;
    let total = ctx.library.len();
    let actx = AdaptationContext {
        budget: ctx.budget,
        accept: ctx.accept,
    };
    let ranked = rank_all(ctx.schema, ctx.stats, q, ctx.library);
    let positives: Vec<BTreeSet<CaseId>> = ctx
        .cfg
        .alphas
        .iter()
        .map(|&a| {
            let thr = a * ctx.stats.mean_structural_similarity;
            positive_set(ctx.schema, ctx.stats, ctx.fields, q, ctx.library, thr, &actx)
        })
        .collect();
    let spec = CondSpec::ThresholdCollapse {
        a: 1,
        pt: ctx.cfg.pt,
    };
    let params = InferParams::default();
    let mut metrics = vec![Metrics::ZERO; 2 * n_a * n_k];
    let mut unconverged = false;
    for (ki, &k) in ctx.cfg.ks.iter().enumerate() {
        let knn_ids: BTreeSet<CaseId> = ranked[..k]
            .iter()
            .map(|&(pos, _)| ctx.library[pos].id)
            .collect();
        let out = agr_retrieve(
            ctx.schema,
            ctx.stats,
            ctx.fields,
            q,
            ctx.library,
            ctx.mrf,
            k,
            &spec,
            ctx.cfg.engine,
            &params,
            &actx,
        )?;
        unconverged |= !out.converged;
        let hybrid_ids: BTreeSet<CaseId> = out.cases.iter().map(|rc| rc.case_id).collect();
        for (ai, pos_set) in positives.iter().enumerate() {
            metrics[cell(0, ai, ki)] = score(&knn_ids, pos_set, total).1;
            metrics[cell(1, ai, ki)] = score(&hybrid_ids, pos_set, total).1;
        }
    }
    let pos_frac = positives
        .iter()
        .map(|p| p.len() as f64 / total as f64)
        .collect();
    Ok(QueryCell {
        metrics,
        pos_frac,
        unconverged,
    })
}

/// Runs the full sweep: seeded fold split, per-fold rebuild of stats,
/// budget and MRF, per-query scoring of both strategies, then per-fold
/// and cross-fold means plus PR curves with AUC.
pub fn cross_validate(cb: &CaseBase, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let n = cb.len();
    let folds = fold_partition(n, cfg.folds, cfg.seed)?;
    let max_fold = folds.iter().map(Vec::len).max().unwrap();
    let min_train = n - max_fold;
    let max_k = *cfg.ks.iter().max().unwrap();
    if max_k > min_train || min_train < 2 {
        return Err(Error::Eval(format!(
            "fold too small: training libraries of {min_train} cases cannot serve k up to {max_k}"
        )));
    }
    let n_a = cfg.alphas.len();
    let n_k = cfg.ks.len();
    let n_cells = 2 * n_a * n_k;

    let mut fold_means: Vec<Vec<Metrics>> = Vec::with_capacity(cfg.folds);
    let mut fold_rates: Vec<Vec<f64>> = Vec::with_capacity(cfg.folds);
    let mut unconverged_queries = 0;
    let accept = AcceptanceModel::Bernoulli {
        p: cfg.acceptance_p,
        seed: cfg.seed,
    };
    for query_ids in &folds {
        let mut held_out = vec![false; n];
        for &id in query_ids {
            held_out[id as usize] = true;
        }
        let library: Vec<Case> = cb
            .cases
            .iter()
            .filter(|c| !held_out[c.id as usize])
            .cloned()
            .collect();
        let stats = compute_stats(&cb.schema, &library)?;
        let mrf = build_mrf(&cb.schema, &stats, &library, cfg.st, 2)?;
        let budget = stats.mean_price;
        let queries: Vec<Query> = query_ids
            .iter()
            .map(|&id| {
                let q = Query::from_case(cb.case(id), &cb.schema, budget);
                inject_missing(&q, &cb.fields, &cfg.missingness, cfg.seed)
            })
            .collect();
        let ctx = FoldCtx {
            schema: &cb.schema,
            fields: &cb.fields,
            cfg,
            library: &library,
            stats: &stats,
            mrf: &mrf,
            budget,
            accept: &accept,
        };
        #[cfg(feature = "parallel")]
        let cells: Vec<Result<QueryCell>> =
            queries.par_iter().map(|q| eval_query(&ctx, q)).collect();
        #[cfg(not(feature = "parallel"))]
        let cells: Vec<Result<QueryCell>> =
            queries.iter().map(|q| eval_query(&ctx, q)).collect();
        let mut sums = vec![Metrics::ZERO; n_cells];
        let mut rates = vec![0.0; n_a];
        for cell in cells {
            let cell = cell?;
            for (sum, m) in sums.iter_mut().zip(&cell.metrics) {
                sum.add(m);
            }
            for (rate, f) in rates.iter_mut().zip(&cell.pos_frac) {
                *rate += f;
            }
            unconverged_queries += usize::from(cell.unconverged);
        }
        let inv = 1.0 / queries.len() as f64;
        fold_means.push(sums.iter().map(|m| m.scaled(inv)).collect());
        fold_rates.push(rates.iter().map(|r| r * inv).collect());
    }

    let cell = |s: usize, ai: usize, ki: usize| (s * n_a + ai) * n_k + ki;
    let strategies = [Strategy::Knn, Strategy::Hybrid];
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for (si, &strategy) in strategies.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            for (ki, &k) in cfg.ks.iter().enumerate() {
                let mut sum = Metrics::ZERO;
                for (fold, per_cell) in fold_means.iter().enumerate() {
                    let m = per_cell[cell(si, ai, ki)];
                    sum.add(&m);
                    rows.push(MetricRow {
                        strategy,
                        alpha,
                        k,
                        fold,
                        metrics: m,
                    });
                }
                means.push(MeanRow {
                    strategy,
                    alpha,
                    k,
                    metrics: sum.scaled(1.0 / cfg.folds as f64),
                });
            }
        }
    }

    let mut curves = Vec::new();
    for (si, &strategy) in strategies.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let points: Vec<PrPoint> = cfg
                .ks
                .iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let m = &means[cell(si, ai, ki)].metrics;
                    PrPoint {
                        recall: m.recall,
                        precision: m.precision,
                        k: Some(k),
                    }
                })
                .collect();
            let rate =
                fold_rates.iter().map(|r| r[ai]).sum::<f64>() / cfg.folds as f64;
            let curve = pr_curve(points, rate);
            let area = auc(&curve)?;
            curves.push(PrCurve {
                strategy,
                alpha,
                points: curve,
                auc: area,
            });
        }
    }
    Ok(SweepResult {
        rows,
        means,
        curves,
        unconverged_queries,
    })
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per (strategy, alpha, k, fold).
pub fn results_csv(res: &SweepResult) -> String {
    let mut out = String::from("strategy,alpha,k,fold,accuracy,precision,recall,f1\n");
    for r in &res.rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.strategy,
            fmt6(r.alpha),
            r.k,
            r.fold,
            fmt6(m.accuracy),
            fmt6(m.precision),
            fmt6(m.recall),
            fmt6(m.f1)
        )
        .unwrap();
    }
    out
}

/// Cross-fold means, one row per (strategy, alpha, k).
pub fn means_csv(res: &SweepResult) -> String {
    let mut out = String::from("strategy,alpha,k,accuracy,precision,recall,f1\n");
    for r in &res.means {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.strategy,
            fmt6(r.alpha),
            r.k,
            fmt6(m.accuracy),
            fmt6(m.precision),
            fmt6(m.recall),
            fmt6(m.f1)
        )
        .unwrap();
    }
    out
}

/// Recall/precision rows for one curve, AUC as a comment footer.
pub fn pr_csv(curve: &PrCurve) -> String {
    let mut out = String::from("recall,precision\n");
    for p in &curve.points {
        writeln!(out, "{},{}", fmt6(p.recall), fmt6(p.precision)).unwrap();
    }
    writeln!(out, "# auc = {}", fmt6(curve.auc)).unwrap();
    out
}
