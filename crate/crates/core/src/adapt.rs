//! The adaptation rule engine for the travel domain.
//!
//! Rules run in a fixed order on a working copy of the retrieved case:
//! R1 shrinks the party size, R2/R3 swap transport with a ±10% price-per-
//! person correction, then the recomputed price is checked against the
//! budget, and R4 searches the library for a replacement hotel when the
//! retrieved one is rejected. A failed budget check or hotel search flags
//! the case as not adaptable.

use std::fmt;

use crate::case::{Case, CaseId, Query};
use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{FeatureValue, TravelFields};

pub const TRAIN: &str = "Train";
pub const COACH: &str = "Coach";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
}

/// The set of rules that executed, in a fixed-width encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleSet(u8);

impl RuleSet {
    pub const EMPTY: RuleSet = RuleSet(0);

    fn bit(rule: Rule) -> u8 {
        match rule {
            Rule::R1 => 1,
            Rule::R2 => 2,
            Rule::R3 => 4,
            Rule::R4 => 8,
        }
    }

    pub fn with(mut self, rule: Rule) -> RuleSet {
        self.0 |= Self::bit(rule);
        self
    }

    pub fn insert(&mut self, rule: Rule) {
        self.0 |= Self::bit(rule);
    }

    pub fn contains(&self, rule: Rule) -> bool {
        self.0 & Self::bit(rule) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// True when any of the substitution rules R2/R3/R4 executed.
    pub fn any_substitution(&self) -> bool {
        self.0 & (2 | 4 | 8) != 0
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "-");
        }
        let mut first = true;
        for (rule, name) in [
            (Rule::R1, "R1"),
            (Rule::R2, "R2"),
            (Rule::R3, "R3"),
            (Rule::R4, "R4"),
        ] {
            if self.contains(rule) {
                if !first {
                    write!(f, "+")?;
                }
                write!(f, "{name}")?;
                first = false;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    OverBudget,
    NoAlternativeHotel,
}

#[derive(Debug, Clone)]
pub struct AdaptationOutcome {
    /// The adapted case; absent exactly when the case was flagged.
    pub adapted: Option<Case>,
    pub rules_applied: RuleSet,
    pub failure: Option<FailureReason>,
}

impl AdaptationOutcome {
    pub fn flagged(&self) -> bool {
        self.failure.is_some()
    }
}

/// How adaptation outcomes map onto MRF states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelMapping {
    /// 1 = no rule, 2 = only R1, 3 = some substitution, 4 = not adaptable.
    FourLevel,
    /// 1 = adaptable, 2 = not adaptable.
    Binary,
}

impl LevelMapping {
    pub fn num_levels(&self) -> usize {
        match self {
            LevelMapping::FourLevel => 4,
            LevelMapping::Binary => 2,
        }
    }
}

/// Whether the user accepts a proposed hotel.
#[derive(Debug, Clone, Copy)]
pub enum AcceptanceModel {
    Always,
    /// Deterministic Bernoulli draw keyed by (seed, hotel name, query id):
    /// re-adapting the same pair in one run gives a consistent answer.
    Bernoulli { p: f64, seed: u64 },
    Custom(fn(hotel: &str, query: CaseId) -> bool),
}

impl AcceptanceModel {
    pub fn validate(&self) -> Result<()> {
        if let AcceptanceModel::Bernoulli { p, .. } = self {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!(
                    "acceptance probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn accepts(&self, hotel: &str, query: CaseId) -> bool {
        match self {
            AcceptanceModel::Always => true,
            AcceptanceModel::Bernoulli { p, seed } => {
                use rand::Rng;
                let mut r =
                    rng::stream(*seed, rng::salt::ACCEPT, &[rng::fnv1a(hotel), query as u64]);
                r.gen::<f64>() < *p
            }
            AcceptanceModel::Custom(f) => f(hotel, query),
        }
    }
}

/// Runs the rule sequence for retrieved case `r` against query `q`.
///
/// `library` is the training-fold case list the hotel search scans; it must
/// be in ascending case-id order (the first match wins). Guards that
/// reference a missing query value do not fire; the hotel-search equalities
/// against missing query values fail, so a rejected hotel with an
/// unspecified Accommodation or Destination cannot be replaced.
pub fn adapt(
    fields: &TravelFields,
    r: &Case,
    q: &Query,
    budget: f64,
    accept: &AcceptanceModel,
    library: &[Case],
) -> AdaptationOutcome {
    let mut a = r.clone();
    let r_persons = r.values[fields.persons]
        .as_num()
        .expect("validated case has Persons");
    let mut price_per_person = r.price(fields) / r_persons;
    let mut rules = RuleSet::EMPTY;

    // R1: shrink the party to the requested size.
    if let Some(q_persons) = q.values[fields.persons].as_num() {
        if r_persons > q_persons {
            a.values[fields.persons] = FeatureValue::Num(q_persons);
            rules.insert(Rule::R1);
        }
    }

    // R2/R3: transport swap with the 10% price correction. The guards are
    // mutually exclusive.
    let r_transport = r.values[fields.transport].as_label();
    let q_transport = q.values[fields.transport].as_label();
    match (r_transport, q_transport) {
        (Some(TRAIN), Some(COACH)) => {
            a.values[fields.transport] = FeatureValue::Label(TRAIN.into());
            price_per_person *= 1.1;
            rules.insert(Rule::R2);
        }
        (Some(COACH), Some(TRAIN)) => {
            a.values[fields.transport] = FeatureValue::Label(COACH.into());
            price_per_person /= 1.1;
            rules.insert(Rule::R3);
        }
        _ => {}
    }

    let a_persons = a.values[fields.persons]
        .as_num()
        .expect("persons survives adaptation");
    let price = price_per_person * a_persons;
    a.values[fields.price] = FeatureValue::Num(price);

    if price > budget {
        return AdaptationOutcome {
            adapted: None,
            rules_applied: rules,
            failure: Some(FailureReason::OverBudget),
        };
    }

    // R4: replace a rejected hotel with one of the requested category at
    // the requested destination.
    if !accept.accepts(&r.hotel.name, q.id) {
        let wanted_category = q.values[fields.accommodation].as_num().map(|c| c as u32);
        let wanted_location = q.values[fields.destination].as_label();
        let found = library.iter().find(|c| {
            Some(c.hotel.category) == wanted_category
                && Some(c.hotel.location.as_str()) == wanted_location
                && c.hotel.name != r.hotel.name
        });
        match found {
            Some(c) => {
                a.hotel = c.hotel.clone();
                a.values[fields.accommodation] = FeatureValue::Num(c.hotel.category as f64);
                a.values[fields.destination] = FeatureValue::Label(c.hotel.location.clone());
                rules.insert(Rule::R4);
            }
            None => {
                return AdaptationOutcome {
                    adapted: None,
                    rules_applied: rules,
                    failure: Some(FailureReason::NoAlternativeHotel),
                };
            }
        }
    }

    AdaptationOutcome {
        adapted: Some(a),
        rules_applied: rules,
        failure: None,
    }
}

/// Maps an outcome to its 1-based adaptation level.
pub fn level_of(outcome: &AdaptationOutcome, mapping: LevelMapping) -> usize {
    match mapping {
        LevelMapping::Binary => {
            if outcome.flagged() {
                2
            } else {
                1
            }
        }
        LevelMapping::FourLevel => {
            if outcome.flagged() {
                4
            } else if outcome.rules_applied.any_substitution() {
                3
            } else if outcome.rules_applied.contains(Rule::R1) {
                2
            } else {
                1
            }
        }
    }
}

/// Convenience: adapt and map to a level in one call.
pub fn adaptation_level(
    fields: &TravelFields,
    r: &Case,
    q: &Query,
    budget: f64,
    accept: &AcceptanceModel,
    library: &[Case],
    mapping: LevelMapping,
) -> usize {
    level_of(&adapt(fields, r, q, budget, accept, library), mapping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Hotel;
    use crate::dataset::read_csv;
    use crate::schema::travel_schema;

    const BASE: &str = "\
id,Duration,Persons,Accommodation,Season,HolidayType,Destination,Transport,Price,Hotel,HotelCategory,HotelLocation
0,7,2,3,6,Bathing,Rimini,Train,200,Hotel Adria,3,Rimini
1,7,4,3,6,Bathing,Rimini,Coach,800,Hotel Regina,3,Rimini
2,10,2,2,7,City,Paris,Plane,900,Hotel Louvre,2,Paris
3,7,2,3,6,Bathing,Rimini,Coach,410,Hotel Dolce,3,Rimini
";

    fn setup() -> (crate::dataset::CaseBase, Query) {
        let cb = read_csv(BASE.as_bytes()).unwrap();
        let q = Query::from_case(cb.case(3), &cb.schema, 1000.0);
        (cb, q)
    }

    const REJECT: AcceptanceModel = AcceptanceModel::Custom(|_, _| false);

    #[test]
    fn no_guard_fires_on_a_matching_case() {
        let (cb, q) = setup();
        let o = adapt(
            &cb.fields,
            cb.case(3),
            &q,
            1000.0,
            &AcceptanceModel::Always,
            &cb.cases,
        );
        assert!(!o.flagged());
        assert!(o.rules_applied.is_empty());
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 1);
        assert_eq!(level_of(&o, LevelMapping::Binary), 1);
        assert_eq!(o.adapted.unwrap().price(&cb.fields), 410.0);
    }

    #[test]
    fn train_to_coach_request_raises_price_ten_percent() {
        // r travels by train at 100 per person for 2 persons; q wants coach.
        let (cb, q) = setup();
        let o = adapt(
            &cb.fields,
            cb.case(0),
            &q,
            500.0,
            &AcceptanceModel::Always,
            &cb.cases,
        );
        assert!(!o.flagged());
        assert!(o.rules_applied.contains(Rule::R2));
        assert!(!o.rules_applied.contains(Rule::R1));
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 3);
        let a = o.adapted.unwrap();
        assert!((a.price(&cb.fields) - 220.0).abs() < 1e-9);
        assert_eq!(a.values[cb.fields.transport].as_label(), Some(TRAIN));
    }

    #[test]
    fn budget_boundary_flags_before_the_hotel_search() {
        // After R2 the price is 100 * 1.1 * 2 ≈ 220; a budget a hair below
        // must flag over-budget and never reach R4 even with a rejecting
        // acceptance model.
        let (cb, q) = setup();
        let o = adapt(&cb.fields, cb.case(0), &q, 219.99, &REJECT, &cb.cases);
        assert!(o.flagged());
        assert_eq!(o.failure, Some(FailureReason::OverBudget));
        assert!(o.adapted.is_none());
        assert!(o.rules_applied.contains(Rule::R2));
        assert!(!o.rules_applied.contains(Rule::R4));
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 4);
        assert_eq!(level_of(&o, LevelMapping::Binary), 2);
    }

    #[test]
    fn party_shrinks_to_requested_size() {
        let (cb, q) = setup();
        let o = adapt(
            &cb.fields,
            cb.case(1),
            &q,
            1000.0,
            &AcceptanceModel::Always,
            &cb.cases,
        );
        assert!(!o.flagged());
        assert_eq!(o.rules_applied, RuleSet::EMPTY.with(Rule::R1));
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 2);
        let a = o.adapted.unwrap();
        assert_eq!(a.values[cb.fields.persons].as_num(), Some(2.0));
        // 800 / 4 persons = 200 per person, times the 2 requested.
        assert_eq!(a.price(&cb.fields), 400.0);
    }

    #[test]
    fn rejected_hotel_is_replaced_by_first_alternative_in_id_order() {
        let (cb, q) = setup();
        let o = adapt(&cb.fields, cb.case(3), &q, 1000.0, &REJECT, &cb.cases);
        assert!(!o.flagged());
        assert!(o.rules_applied.contains(Rule::R4));
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 3);
        let a = o.adapted.unwrap();
        // Candidates with category 3 at Rimini: ids 0, 1 (3 is excluded by
        // the name inequality); id 0 wins.
        assert_eq!(a.hotel.name, "Hotel Adria");
        assert_eq!(a.values[cb.fields.destination].as_label(), Some("Rimini"));
    }

    #[test]
    fn no_alternative_hotel_flags() {
        let (cb, _) = setup();
        let q = Query::from_case(cb.case(2), &cb.schema, 2000.0);
        // Paris has a single category-2 hotel, so rejecting it dead-ends.
        let o = adapt(&cb.fields, cb.case(2), &q, 2000.0, &REJECT, &cb.cases);
        assert!(o.flagged());
        assert_eq!(o.failure, Some(FailureReason::NoAlternativeHotel));
        assert_eq!(level_of(&o, LevelMapping::FourLevel), 4);
    }

    #[test]
    fn missing_query_values_disable_guards() {
        let (cb, mut q) = setup();
        q.values[cb.fields.transport] = FeatureValue::Missing;
        q.values[cb.fields.persons] = FeatureValue::Missing;
        let o = adapt(
            &cb.fields,
            cb.case(1),
            &q,
            1000.0,
            &AcceptanceModel::Always,
            &cb.cases,
        );
        assert!(o.rules_applied.is_empty(), "{}", o.rules_applied);
        // A rejected hotel cannot be replaced when the requested category
        // is unspecified: the search equalities fail.
        q.values[cb.fields.accommodation] = FeatureValue::Missing;
        let o = adapt(&cb.fields, cb.case(3), &q, 1000.0, &REJECT, &cb.cases);
        assert_eq!(o.failure, Some(FailureReason::NoAlternativeHotel));
    }

    #[test]
    fn level_mapping_is_total_and_matches_the_published_levels() {
        let flagged = AdaptationOutcome {
            adapted: None,
            rules_applied: RuleSet::EMPTY.with(Rule::R1),
            failure: Some(FailureReason::OverBudget),
        };
        let mixed = AdaptationOutcome {
            adapted: Some(dummy_case()),
            rules_applied: RuleSet::EMPTY.with(Rule::R1).with(Rule::R3),
            failure: None,
        };
        assert_eq!(level_of(&flagged, LevelMapping::FourLevel), 4);
        assert_eq!(level_of(&flagged, LevelMapping::Binary), 2);
        assert_eq!(level_of(&mixed, LevelMapping::FourLevel), 3);
        assert_eq!(level_of(&mixed, LevelMapping::Binary), 1);
    }

    fn dummy_case() -> Case {
        read_csv(BASE.as_bytes()).unwrap().case(0).clone()
    }

    #[test]
    fn acceptance_models() {
        assert!(AcceptanceModel::Always.accepts("Hotel Adria", 0));
        let never = AcceptanceModel::Bernoulli { p: 0.0, seed: 1 };
        let always = AcceptanceModel::Bernoulli { p: 1.0, seed: 1 };
        for id in 0..64 {
            assert!(!never.accepts("Hotel Adria", id));
            assert!(always.accepts("Hotel Adria", id));
        }
        assert!(AcceptanceModel::Bernoulli { p: 1.5, seed: 1 }.validate().is_err());
    }

    #[test]
    fn bernoulli_acceptance_frequency() {
        let model = AcceptanceModel::Bernoulli { p: 0.8, seed: 11 };
        let hits = (0..10_000)
            .filter(|&id| model.accepts("Hotel Adria", id))
            .count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.8).abs() < 0.02, "{rate}");
    }

    #[test]
    fn bernoulli_acceptance_is_keyed_not_sequential() {
        let model = AcceptanceModel::Bernoulli { p: 0.5, seed: 3 };
        let a: Vec<bool> = (0..32).map(|id| model.accepts("H", id)).collect();
        let b: Vec<bool> = (0..32).rev().map(|id| model.accepts("H", id)).collect();
        let b: Vec<bool> = b.into_iter().rev().collect();
        assert_eq!(a, b);
        assert_ne!(
            model.accepts("Hotel Adria", 5),
            AcceptanceModel::Bernoulli { p: 0.5, seed: 4 }.accepts("Hotel Adria", 5)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hotel(name: &str, category: u32, location: &str) -> Hotel {
            Hotel {
                name: name.into(),
                category,
                location: location.into(),
            }
        }

        fn travel_case(
            id: u32,
            persons: f64,
            transport: &str,
            price: f64,
        ) -> Case {
            let schema = travel_schema();
            let mut values = vec![FeatureValue::Missing; schema.len()];
            values[0] = FeatureValue::Num(7.0);
            values[1] = FeatureValue::Num(persons);
            values[2] = FeatureValue::Num(3.0);
            values[3] = FeatureValue::Num(6.0);
            values[4] = FeatureValue::Label("Bathing".into());
            values[5] = FeatureValue::Label("Rimini".into());
            values[6] = FeatureValue::Label(transport.into());
            values[7] = FeatureValue::Num(price);
            Case {
                id,
                values,
                hotel: hotel("Hotel Adria", 3, "Rimini"),
            }
        }

        proptest! {
            // The transport corrections are exact inverses: push a price
            // through the ×1.1 of R2, hand the result to a coach case, and
            // the ÷1.1 of R3 restores it.
            #[test]
            fn r2_then_r3_restores_price(ppp in 1.0..5000.0f64, persons in 1u32..6) {
                let fields = crate::schema::TravelFields::resolve(&travel_schema()).unwrap();
                let r_train = travel_case(0, persons as f64, TRAIN, ppp * persons as f64);
                let mut q_coach = Query::from_case(&r_train, &travel_schema(), f64::MAX);
                q_coach.values[fields.transport] = FeatureValue::Label(COACH.into());
                let up = adapt(&fields, &r_train, &q_coach, f64::MAX, &AcceptanceModel::Always, &[]);
                prop_assert!(up.rules_applied.contains(Rule::R2));
                let mut by_coach = up.adapted.unwrap();
                by_coach.values[fields.transport] = FeatureValue::Label(COACH.into());
                let mut q_train = Query::from_case(&by_coach, &travel_schema(), f64::MAX);
                q_train.values[fields.transport] = FeatureValue::Label(TRAIN.into());
                let down = adapt(&fields, &by_coach, &q_train, f64::MAX, &AcceptanceModel::Always, &[]);
                prop_assert!(down.rules_applied.contains(Rule::R3));
                let restored = down.adapted.unwrap().price(&fields);
                prop_assert!((restored - ppp * persons as f64).abs() < 1e-9);
            }

            // Raising the budget never flags a previously adaptable case.
            #[test]
            fn budget_is_monotone(
                price in 50.0..4000.0f64,
                persons in 1u32..6,
                budget in 50.0..4000.0f64,
                extra in 0.0..2000.0f64,
            ) {
                let fields = crate::schema::TravelFields::resolve(&travel_schema()).unwrap();
                let r = travel_case(0, persons as f64, COACH, price);
                let q = Query::from_case(&r, &travel_schema(), budget);
                let lo = adapt(&fields, &r, &q, budget, &AcceptanceModel::Always, &[]);
                let hi = adapt(&fields, &r, &q, budget + extra, &AcceptanceModel::Always, &[]);
                prop_assert!(!(!lo.flagged() && hi.flagged()));
            }

            // R2 and R3 guards never fire together.
            #[test]
            fn transport_guards_are_exclusive(
                rt in prop::sample::select(vec!["Train", "Coach", "Car", "Plane"]),
                qt in prop::sample::select(vec!["Train", "Coach", "Car", "Plane"]),
            ) {
                let fields = crate::schema::TravelFields::resolve(&travel_schema()).unwrap();
                let r = travel_case(0, 2.0, rt, 400.0);
                let mut q = Query::from_case(&r, &travel_schema(), f64::MAX);
                q.values[fields.transport] = FeatureValue::Label(qt.into());
                let o = adapt(&fields, &r, &q, f64::MAX, &AcceptanceModel::Always, &[]);
                prop_assert!(!(o.rules_applied.contains(Rule::R2) && o.rules_applied.contains(Rule::R3)));
            }
        }
    }
}
