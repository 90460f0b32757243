//! Case-based retrieval with adaptation-guided inference on a metric
//! Markov random field over the case library.
//!
//! The crate covers the full pipeline: case-base ingestion and synthetic
//! generation, heterogeneous distances, the adaptation rule engine, the
//! metric MRF with mean-field / belief-propagation / exact inference, the
//! hybrid retrieval strategy and the cross-validated evaluation harness.

pub mod adapt;
pub mod case;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod infer;
pub mod mrf;
pub mod retrieval;
pub mod rng;
pub mod schema;
pub mod synthetic;

pub use case::{Case, CaseId, Hotel, Query};
pub use dataset::{CaseBase, MissingnessProfile};
pub use distance::CaseBaseStats;
pub use error::{Error, Result};
pub use schema::{FeatureKind, FeatureSchema, FeatureValue, TravelFields};
