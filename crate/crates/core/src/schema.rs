//! Feature schema: names, kinds, roles and distance weights.
//!
//! The schema drives the heterogeneous distance computations. Each feature
//! carries two weights: one for the structural (problem-side) distance and
//! one for the solution-side distance; a weight of zero excludes the feature
//! from the corresponding aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How local distances are computed for a feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Standardized Euclidean: |a - b| / sigma.
    Numeric,
    /// Integer codes 0..levels, standardized Euclidean on the codes.
    Ordinal { levels: u32 },
    /// Values 1..=range on a circle: min(|a - b|, range - |a - b|).
    Cyclic { range: u32 },
    /// Overlap distance: 0 if equal, 1 otherwise.
    Categorical,
}

impl FeatureKind {
    /// Whether the kind needs a standard deviation from the case-base stats.
    pub fn is_standardized(&self) -> bool {
        matches!(self, FeatureKind::Numeric | FeatureKind::Ordinal { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    /// Part of the case description; queryable.
    Problem,
    /// Part of the stored solution only.
    Solution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub role: FeatureRole,
    #[serde(default)]
    pub weight_structural: f64,
    #[serde(default)]
    pub weight_solution: f64,
}

/// A single feature value; queries may leave any feature unspecified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Missing,
    Num(f64),
    Label(String),
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            FeatureValue::Label(s) => Some(s),
            _ => None,
        }
    }
}

/// Ordered feature declarations plus distance weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    /// Validates the schema invariants: unique names, nonnegative weights,
    /// at least one positive structural and one positive solution weight,
    /// and sane ordinal/cyclic parameters.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
            if f.weight_structural < 0.0 || f.weight_solution < 0.0 {
                return Err(Error::Schema(format!("negative weight on '{}'", f.name)));
            }
            match f.kind {
                FeatureKind::Ordinal { levels } if levels < 2 => {
                    return Err(Error::Schema(format!("ordinal '{}' needs >= 2 levels", f.name)));
                }
                FeatureKind::Cyclic { range } if range < 2 => {
                    return Err(Error::Schema(format!("cyclic '{}' needs range >= 2", f.name)));
                }
                _ => {}
            }
            if f.role == FeatureRole::Solution && f.weight_structural > 0.0 {
                return Err(Error::Schema(format!(
                    "solution feature '{}' cannot carry a structural weight",
                    f.name
                )));
            }
        }
        if !self.features.iter().any(|f| f.weight_structural > 0.0) {
            return Err(Error::Schema("no positive structural weight".into()));
        }
        if !self.features.iter().any(|f| f.weight_solution > 0.0) {
            return Err(Error::Schema("no positive solution weight".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Indices of problem-side features, in declaration order.
    pub fn problem_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.role == FeatureRole::Problem)
            .map(|(i, _)| i)
    }

    /// Checks a present value against the feature's declared domain.
    pub fn check_value(&self, idx: usize, value: &FeatureValue) -> Result<()> {
        let f = &self.features[idx];
        let fail = |msg: String| Err(Error::Schema(format!("feature '{}': {}", f.name, msg)));
        match (&f.kind, value) {
            (_, FeatureValue::Missing) => Ok(()),
            (FeatureKind::Numeric, FeatureValue::Num(x)) => {
                if x.is_finite() {
                    Ok(())
                } else {
                    fail(format!("non-finite value {x}"))
                }
            }
            (FeatureKind::Ordinal { levels }, FeatureValue::Num(x)) => {
                if x.fract() == 0.0 && *x >= 0.0 && (*x as u32) < *levels {
                    Ok(())
                } else {
                    fail(format!("ordinal code {x} outside 0..{levels}"))
                }
            }
            (FeatureKind::Cyclic { range }, FeatureValue::Num(x)) => {
                if x.fract() == 0.0 && *x >= 1.0 && (*x as u32) <= *range {
                    Ok(())
                } else {
                    fail(format!("cyclic value {x} outside 1..={range}"))
                }
            }
            (FeatureKind::Categorical, FeatureValue::Label(_)) => Ok(()),
            (kind, value) => fail(format!("value {value:?} does not match kind {kind:?}")),
        }
    }
}

/// Resolved indices of the travel-domain features the adaptation rules and
/// the CSV codec refer to by name.
#[derive(Debug, Clone, Copy)]
pub struct TravelFields {
    pub duration: usize,
    pub persons: usize,
    pub accommodation: usize,
    pub season: usize,
    pub holiday_type: usize,
    pub destination: usize,
    pub transport: usize,
    pub price: usize,
}

impl TravelFields {
    pub fn resolve(schema: &FeatureSchema) -> Result<Self> {
        let need = |name: &str| {
            schema
                .index_of(name)
                .ok_or_else(|| Error::Schema(format!("schema is missing feature '{name}'")))
        };
        let fields = TravelFields {
            duration: need("Duration")?,
            persons: need("Persons")?,
            accommodation: need("Accommodation")?,
            season: need("Season")?,
            holiday_type: need("HolidayType")?,
            destination: need("Destination")?,
            transport: need("Transport")?,
            price: need("Price")?,
        };
        if schema.features[fields.price].role != FeatureRole::Solution {
            return Err(Error::Schema("'Price' must have role = solution".into()));
        }
        Ok(fields)
    }
}

/// The travel case-base schema with uniform default weights: every problem
/// feature weighs equally in the structural distance, and Price,
/// Accommodation and Destination weigh equally in the solution distance.
pub fn travel_schema() -> FeatureSchema {
    fn def(
        name: &str,
        kind: FeatureKind,
        role: FeatureRole,
        ws: f64,
        wsol: f64,
    ) -> FeatureDef {
        FeatureDef {
            name: name.to_string(),
            kind,
            role,
            weight_structural: ws,
            weight_solution: wsol,
        }
    }
    use FeatureKind::*;
    use FeatureRole::*;
    FeatureSchema {
        features: vec![
            def("Duration", Numeric, Problem, 1.0, 0.0),
            def("Persons", Numeric, Problem, 1.0, 0.0),
            def("Accommodation", Ordinal { levels: 6 }, Problem, 1.0, 1.0),
            def("Season", Cyclic { range: 12 }, Problem, 1.0, 0.0),
            def("HolidayType", Categorical, Problem, 1.0, 0.0),
            def("Destination", Categorical, Problem, 1.0, 1.0),
            def("Transport", Categorical, Problem, 1.0, 0.0),
            def("Price", Numeric, Solution, 0.0, 1.0),
        ],
    }
}
