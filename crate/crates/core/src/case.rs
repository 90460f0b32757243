//! Cases (stored problem/solution pairs) and queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, FeatureValue, TravelFields};

pub type CaseId = u32;

/// The hotel part of a stored solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotel {
    pub name: String,
    /// Star category, integer code 0..=5. Mirrors the case's Accommodation.
    pub category: u32,
    /// Mirrors the case's Destination.
    pub location: String,
}

/// A stored case: the feature vector (aligned with the schema declaration
/// order, Price included) plus the hotel of the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: CaseId,
    pub values: Vec<FeatureValue>,
    pub hotel: Hotel,
}

impl Case {
    pub fn value(&self, idx: usize) -> &FeatureValue {
        &self.values[idx]
    }

    pub fn price(&self, fields: &TravelFields) -> f64 {
        self.values[fields.price]
            .as_num()
            .expect("stored case has a price")
    }

    /// Validates values against the schema domain and checks the
    /// case-level consistency rules: positive price, hotel location equal
    /// to Destination, hotel category equal to Accommodation, and a
    /// nonzero Persons count (the adaptation rules divide by it).
    pub fn validate(&self, schema: &FeatureSchema, fields: &TravelFields) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::InvalidCase {
                id: self.id,
                msg: format!(
                    "expected {} feature values, got {}",
                    schema.len(),
                    self.values.len()
                ),
            });
        }
        for (idx, value) in self.values.iter().enumerate() {
            schema.check_value(idx, value).map_err(|e| Error::InvalidCase {
                id: self.id,
                msg: e.to_string(),
            })?;
        }
        let fail = |msg: String| {
            Err(Error::InvalidCase {
                id: self.id,
                msg,
            })
        };
        match self.values[fields.price].as_num() {
            Some(p) if p > 0.0 => {}
            Some(p) => return fail(format!("price must be positive, got {p}")),
            None => return fail("price is missing".into()),
        }
        match self.values[fields.persons].as_num() {
            Some(p) if p >= 1.0 => {}
            Some(p) => return fail(format!("persons must be >= 1, got {p}")),
            None => return fail("persons is missing".into()),
        }
        match self.values[fields.accommodation].as_num() {
            Some(a) if a == self.hotel.category as f64 => {}
            Some(a) => {
                return fail(format!(
                    "hotel category {} does not match accommodation {a}",
                    self.hotel.category
                ))
            }
            None => return fail("accommodation is missing".into()),
        }
        match self.values[fields.destination].as_label() {
            Some(d) if d == self.hotel.location => {}
            Some(d) => {
                return fail(format!(
                    "hotel location '{}' does not match destination '{d}'",
                    self.hotel.location
                ))
            }
            None => return fail("destination is missing".into()),
        }
        Ok(())
    }
}

/// A query: problem-side feature values (any of which may be missing) and a
/// price budget for the adaptation rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// Identifier used to key per-query random streams (missing-value
    /// injection, hotel acceptance). Queries derived from held-out cases
    /// reuse the case id; ad-hoc queries may use any value.
    pub id: CaseId,
    pub values: Vec<FeatureValue>,
    pub budget: f64,
}

impl Query {
    /// Builds a fully-specified query from a stored case's problem features.
    pub fn from_case(case: &Case, schema: &FeatureSchema, budget: f64) -> Query {
        let mut values = vec![FeatureValue::Missing; schema.len()];
        for idx in schema.problem_indices() {
            values[idx] = case.values[idx].clone();
        }
        Query {
            id: case.id,
            values,
            budget,
        }
    }

    pub fn value(&self, idx: usize) -> &FeatureValue {
        &self.values[idx]
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::Schema(format!(
                "query has {} values, schema declares {}",
                self.values.len(),
                schema.len()
            )));
        }
        for idx in schema.problem_indices() {
            schema.check_value(idx, &self.values[idx])?;
        }
        if !self
            .values
            .iter()
            .any(|v| !v.is_missing())
        {
            return Err(Error::Schema("query has no present feature".into()));
        }
        if !(self.budget > 0.0) {
            return Err(Error::Schema(format!(
                "query budget must be positive, got {}",
                self.budget
            )));
        }
        Ok(())
    }
}
