//! Browser front-end for the retrieval engine.
//!
//! The heavy lifting stays in `agr-core`; this crate builds the JSON the
//! page consumes and exposes three operations through wasm-bindgen:
//! exploring the solution-similarity graph, comparing plain kNN against
//! the hybrid strategy on a query derived from a picked case, and running
//! a small cross-validated precision/recall sweep. All JSON builders are
//! plain Rust and unit-tested on the host; `www/index.html` is the page.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use agr_core::adapt::{adapt, level_of, AcceptanceModel, LevelMapping};
use agr_core::dataset::{inject_missing, MissingnessProfile};
use agr_core::eval::{cross_validate, SweepConfig};
use agr_core::infer::{InferParams, InferenceEngine};
use agr_core::mrf::{build_mrf, MetricMrf};
use agr_core::retrieval::{
    agr_retrieve, knn_retrieve, AdaptationContext, CondSpec, RankedCase, Source,
};
use agr_core::synthetic::generate_synthetic;
use agr_core::{CaseBase, CaseBaseStats, Query};

/// Case base plus the derived artifacts every operation shares.
pub struct DemoState {
    cb: CaseBase,
    stats: CaseBaseStats,
    mrf: MetricMrf,
    seed: u64,
    st: f64,
}

impl DemoState {
    pub fn new(n: usize, seed: u64, st: f64) -> agr_core::Result<DemoState> {
        let cb = generate_synthetic(n, seed)?;
        let stats = cb.compute_stats()?;
        let mrf = build_mrf(&cb.schema, &stats, &cb.cases, st, 2)?;
        Ok(DemoState {
            cb,
            stats,
            mrf,
            seed,
            st,
        })
    }

    fn node_label(&self, pos: usize) -> String {
        let c = &self.cb.cases[pos];
        let f = &self.cb.fields;
        format!(
            "{} / {}",
            c.values[f.holiday_type].as_label().unwrap_or("?"),
            c.values[f.destination].as_label().unwrap_or("?"),
        )
    }

    /// Solution graph with a precomputed layout: components packed onto
    /// shelves largest-first, members of each on a ring. Coordinates are
    /// normalized to the unit square with a shared scale, so rings stay
    /// circular whatever the canvas.
    pub fn graph_json(&self) -> Value {
        let components = self.mrf.connected_components();
        let (positions, unit) = layout(self.cb.len(), &components);
        let mut component_of = vec![0usize; self.cb.len()];
        for (ci, comp) in components.iter().enumerate() {
            for &node in comp {
                component_of[node] = ci;
            }
        }
        let nodes: Vec<Value> = (0..self.cb.len())
            .map(|pos| {
                let c = &self.cb.cases[pos];
                json!({
                    "id": c.id,
                    "x": positions[pos].0,
                    "y": positions[pos].1,
                    "component": component_of[pos],
                    "price": c.price(&self.cb.fields),
                    "label": self.node_label(pos),
                    "hotel": c.hotel.name,
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .mrf
            .edges
            .iter()
            .map(|e| json!({ "a": e.n, "b": e.m, "s": e.s }))
            .collect();
        json!({
            "n": self.cb.len(),
            "seed": self.seed,
            "st": self.st,
            "components": components.len(),
            "largest": components.iter().map(Vec::len).max().unwrap_or(0),
            // One layout unit (~a node diameter) in normalized coordinates.
            "unit": unit,
            "nodes": nodes,
            "edges": edges,
        })
    }

    /// Runs both strategies on a query derived from the picked case, with
    /// the standard missing-value injection applied so the query is only a
    /// partial description. Every kNN row carries its adaptability so the
    /// page can show what the hybrid strategy drops and what it pulls in.
    pub fn retrieve_json(&self, case_id: u32, k: usize, pt: f64) -> agr_core::Result<Value> {
        let pos = case_id as usize;
        if pos >= self.cb.len() {
            return Err(agr_core::Error::Retrieval(format!(
                "case {case_id} outside 0..{}",
                self.cb.len()
            )));
        }
        let budget = self.stats.mean_price;
        let full = Query::from_case(self.cb.case(case_id), &self.cb.schema, budget);
        let q = inject_missing(&full, &self.cb.fields, &MissingnessProfile::default(), self.seed);
        let blanked: Vec<&str> = self
            .cb
            .schema
            .problem_indices()
            .filter(|&idx| q.values[idx].is_missing() && !full.values[idx].is_missing())
            .map(|idx| self.cb.schema.features[idx].name.as_str())
            .collect();

        let accept = AcceptanceModel::Always;
        let ctx = AdaptationContext {
            budget,
            accept: &accept,
        };
        let knn = knn_retrieve(&self.cb.schema, &self.stats, &q, &self.cb.cases, k)?;
        let knn_rows: Vec<Value> = knn
            .iter()
            .enumerate()
            .map(|(rank, r)| {
                let outcome = adapt(
                    &self.cb.fields,
                    self.cb.case(r.case_id),
                    &q,
                    budget,
                    &accept,
                    &self.cb.cases,
                );
                let mut row = self.ranked_row(rank, r);
                row["level"] = json!(level_of(&outcome, LevelMapping::Binary));
                row
            })
            .collect();
        let agr = agr_retrieve(
            &self.cb.schema,
            &self.stats,
            &self.cb.fields,
            &q,
            &self.cb.cases,
            &self.mrf,
            k,
            &CondSpec::ThresholdCollapse { a: 1, pt },
            InferenceEngine::MeanField,
            &InferParams::default(),
            &ctx,
        )?;
        let hybrid_rows: Vec<Value> = agr
            .cases
            .iter()
            .enumerate()
            .map(|(rank, r)| {
                let mut row = self.ranked_row(rank, r);
                if let Some(level) = r.asserted_level {
                    row["level"] = json!(level);
                }
                row
            })
            .collect();
        Ok(json!({
            "query": {
                "case_id": case_id,
                "budget": budget,
                "blanked": blanked,
                "label": self.node_label(pos),
            },
            "k": k,
            "pt": pt,
            "adaptable_knn": agr.adaptable_knn,
            "converged": agr.converged,
            "knn": knn_rows,
            "hybrid": hybrid_rows,
        }))
    }

    fn ranked_row(&self, rank: usize, r: &RankedCase) -> Value {
        let pos = r.case_id as usize;
        json!({
            "rank": rank + 1,
            "case_id": r.case_id,
            "similarity": r.similarity,
            "source": match r.source {
                Source::Knn => "knn",
                Source::Mrf => "mrf",
            },
            "price": self.cb.cases[pos].price(&self.cb.fields),
            "label": self.node_label(pos),
        })
    }

    /// Cross-validated sweep at one positive threshold; small enough to
    /// run in the page without worker threads.
    pub fn sweep_json(&self, alpha: f64) -> agr_core::Result<Value> {
        let cfg = SweepConfig {
            alphas: vec![alpha],
            ks: vec![1, 2, 3, 5, 8, 12, 20, 30, 50],
            folds: 3,
            st: self.st,
            pt: 0.9,
            seed: self.seed,
            ..SweepConfig::default()
        };
        let res = cross_validate(&self.cb, &cfg)?;
        let curves: Vec<Value> = res
            .curves
            .iter()
            .map(|c| {
                json!({
                    "strategy": c.strategy.to_string(),
                    "auc": c.auc,
                    "points": c.points.iter().map(|p| json!({
                        "recall": p.recall,
                        "precision": p.precision,
                        "k": p.k,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        let means: Vec<Value> = res
            .means
            .iter()
            .map(|m| {
                json!({
                    "strategy": m.strategy.to_string(),
                    "k": m.k,
                    "f1": m.metrics.f1,
                    "accuracy": m.metrics.accuracy,
                    "precision": m.metrics.precision,
                    "recall": m.metrics.recall,
                })
            })
            .collect();
        Ok(json!({ "alpha": alpha, "curves": curves, "means": means }))
    }
}

/// One (x, y) per node, both in [0, 1], plus the shared scale of one
/// layout unit (~a node diameter) in those coordinates. Components become
/// rings packed onto shelves in decreasing size order.
fn layout(n: usize, components: &[Vec<usize>]) -> (Vec<(f64, f64)>, f64) {
    let ring = |len: usize| -> f64 {
        if len == 1 {
            0.0
        } else {
            (1.05 * (len as f64).sqrt()).max(1.3)
        }
    };
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(components[i].len()), components[i][0]));
    let radii: Vec<f64> = components.iter().map(|c| ring(c.len()) + 1.6).collect();
    let target_w = radii.iter().map(|r| (2.0 * r).powi(2)).sum::<f64>().sqrt() * 1.25;

    let mut centers = vec![(0.0, 0.0); components.len()];
    let (mut x, mut y, mut shelf, mut max_w) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &i in &order {
        let d = 2.0 * radii[i];
        if x > 0.0 && x + d > target_w {
            y += shelf;
            x = 0.0;
            shelf = 0.0;
        }
        centers[i] = (x + radii[i], y + radii[i]);
        x += d;
        shelf = shelf.max(d);
        max_w = max_w.max(x);
    }
    let total_h = y + shelf;
    let scale = 1.0 / max_w.max(total_h).max(1.0);
    let ox = (1.0 - max_w * scale) / 2.0;
    let oy = (1.0 - total_h * scale) / 2.0;

    let mut positions = vec![(0.0, 0.0); n];
    for (i, comp) in components.iter().enumerate() {
        let (cx, cy) = centers[i];
        let rho = ring(comp.len());
        for (j, &node) in comp.iter().enumerate() {
            let angle = TAU * j as f64 / comp.len() as f64 - FRAC_PI_2;
            positions[node] = (
                ox + (cx + rho * angle.cos()) * scale,
                oy + (cy + rho * angle.sin()) * scale,
            );
        }
    }
    (positions, scale)
}

/// The wasm-facing handle. Methods return JSON strings; errors surface as
/// exceptions carrying the library's error message.
#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u32, st: f64) -> Result<Demo, JsError> {
        let state = DemoState::new(n, seed as u64, st).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo { state })
    }

    pub fn graph(&self) -> String {
        self.state.graph_json().to_string()
    }

    pub fn retrieve(&self, case_id: u32, k: usize, pt: f64) -> Result<String, JsError> {
        self.state
            .retrieve_json(case_id, k, pt)
            .map(|v| v.to_string())
            .map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn sweep(&self, alpha: f64) -> Result<String, JsError> {
        self.state
            .sweep_json(alpha)
            .map(|v| v.to_string())
            .map_err(|e| JsError::new(&e.to_string()))
    }
}
