//! Case-base ingestion, canonical CSV I/O, per-library statistics and
//! missing-value injection for queries.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::case::{Case, CaseId, Hotel, Query};
use crate::distance::{similarity, structural_distance_cases, CaseBaseStats};
use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{FeatureKind, FeatureSchema, FeatureValue, TravelFields};

/// Exact column order of the interchange format. Missing cells are empty.
pub const CSV_HEADER: [&str; 12] = [
    "id",
    "Duration",
    "Persons",
    "Accommodation",
    "Season",
    "HolidayType",
    "Destination",
    "Transport",
    "Price",
    "Hotel",
    "HotelCategory",
    "HotelLocation",
];

/// A validated case library. Ids are dense (0..n-1) and double as vector
/// positions. Fold views used during evaluation are plain `&[Case]` slices
/// or owned subsets and keep the original ids.
#[derive(Debug, Clone)]
pub struct CaseBase {
    pub schema: FeatureSchema,
    pub fields: TravelFields,
    pub cases: Vec<Case>,
}

impl CaseBase {
    pub fn new(schema: FeatureSchema, mut cases: Vec<Case>) -> Result<CaseBase> {
        schema.validate()?;
        let fields = TravelFields::resolve(&schema)?;
        let mut seen = HashSet::new();
        for case in &cases {
            if !seen.insert(case.id) {
                return Err(Error::CaseBase(format!("duplicate case id {}", case.id)));
            }
            case.validate(&schema, &fields)?;
        }
        cases.sort_by_key(|c| c.id);
        for (pos, case) in cases.iter().enumerate() {
            if case.id as usize != pos {
                return Err(Error::CaseBase(format!(
                    "case ids must be dense 0..{}, found {}",
                    cases.len(),
                    case.id
                )));
            }
        }
        Ok(CaseBase {
            schema,
            fields,
            cases,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, id: CaseId) -> &Case {
        &self.cases[id as usize]
    }

    pub fn compute_stats(&self) -> Result<CaseBaseStats> {
        compute_stats(&self.schema, &self.cases)
    }
}

fn parse_num(row: usize, column: &str, cell: &str) -> Result<FeatureValue> {
    if cell.is_empty() {
        return Ok(FeatureValue::Missing);
    }
    cell.parse::<f64>()
        .map(FeatureValue::Num)
        .map_err(|_| Error::CsvCell {
            row,
            column: column.to_string(),
            msg: format!("expected a number, got '{cell}'"),
        })
}

fn parse_label(cell: &str) -> FeatureValue {
    if cell.is_empty() {
        FeatureValue::Missing
    } else {
        FeatureValue::Label(cell.to_string())
    }
}

/// Loads a case base from CSV. Rows violating case invariants are rejected
/// with row/column diagnostics; the header must match [`CSV_HEADER`]
/// exactly.
pub fn read_csv<R: Read>(reader: R) -> Result<CaseBase> {
    let schema = crate::schema::travel_schema();
    let fields = TravelFields::resolve(&schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::Schema(format!(
            "unexpected CSV header: expected '{}', got '{}'",
            CSV_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut cases = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = record?;
        if record.len() != CSV_HEADER.len() {
            return Err(Error::CsvCell {
                row,
                column: "-".into(),
                msg: format!("expected {} cells, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        let id: CaseId = cell(0).parse().map_err(|_| Error::CsvCell {
            row,
            column: "id".into(),
            msg: format!("expected an integer id, got '{}'", cell(0)),
        })?;
        let mut values = vec![FeatureValue::Missing; schema.len()];
        values[fields.duration] = parse_num(row, "Duration", cell(1))?;
        values[fields.persons] = parse_num(row, "Persons", cell(2))?;
        values[fields.accommodation] = parse_num(row, "Accommodation", cell(3))?;
        values[fields.season] = parse_num(row, "Season", cell(4))?;
        values[fields.holiday_type] = parse_label(cell(5));
        values[fields.destination] = parse_label(cell(6));
        values[fields.transport] = parse_label(cell(7));
        values[fields.price] = parse_num(row, "Price", cell(8))?;
        let category: u32 = cell(10).parse().map_err(|_| Error::CsvCell {
            row,
            column: "HotelCategory".into(),
            msg: format!("expected an integer category, got '{}'", cell(10)),
        })?;
        let case = Case {
            id,
            values,
            hotel: Hotel {
                name: cell(9).to_string(),
                category,
                location: cell(11).to_string(),
            },
        };
        cases.push(case);
    }
    CaseBase::new(schema, cases)
}

pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<CaseBase> {
    read_csv(std::fs::File::open(path)?)
}

/// Canonical numeric cell: integral values without a decimal point,
/// fractional values with two decimals. Writing is lossy below a cent.
fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

fn fmt_value(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Missing => String::new(),
        FeatureValue::Num(x) => fmt_num(*x),
        FeatureValue::Label(s) => s.clone(),
    }
}

/// Writes a case base in canonical formatting; `read_csv(write_csv(cb))`
/// is byte-stable.
pub fn write_csv<W: Write>(writer: W, cb: &CaseBase) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    let f = &cb.fields;
    for case in &cb.cases {
        wtr.write_record([
            case.id.to_string(),
            fmt_value(&case.values[f.duration]),
            fmt_value(&case.values[f.persons]),
            fmt_value(&case.values[f.accommodation]),
            fmt_value(&case.values[f.season]),
            fmt_value(&case.values[f.holiday_type]),
            fmt_value(&case.values[f.destination]),
            fmt_value(&case.values[f.transport]),
            fmt_value(&case.values[f.price]),
            case.hotel.name.clone(),
            case.hotel.category.to_string(),
            case.hotel.location.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv<P: AsRef<Path>>(path: P, cb: &CaseBase) -> Result<()> {
    write_csv(std::fs::File::create(path)?, cb)
}

/// Per-library statistics over an arbitrary case slice (full base or
/// training fold): sample standard deviations, maximum observed local
/// distances, mean price and the mean pairwise structural similarity.
pub fn compute_stats(schema: &FeatureSchema, cases: &[Case]) -> Result<CaseBaseStats> {
    if cases.len() < 2 {
        return Err(Error::Stats(format!(
            "need at least 2 cases for pairwise statistics, got {}",
            cases.len()
        )));
    }
    let n_features = schema.len();
    let mut sigma = vec![None; n_features];
    let mut maxd = vec![0.0; n_features];
    for idx in 0..n_features {
        let kind = schema.features[idx].kind;
        match kind {
            FeatureKind::Numeric | FeatureKind::Ordinal { .. } => {
                let present: Vec<f64> =
                    cases.iter().filter_map(|c| c.values[idx].as_num()).collect();
                let s = sample_std(&present);
                match s {
                    Some(s) => {
                        let lo = present.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = present.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        sigma[idx] = Some(s);
                        maxd[idx] = (hi - lo) / s;
                    }
                    // Constant (or near-empty) feature: overlap fallback.
                    None => maxd[idx] = 1.0,
                }
            }
            FeatureKind::Cyclic { range } => {
                let mut distinct: Vec<f64> = cases
                    .iter()
                    .filter_map(|c| c.values[idx].as_num())
                    .collect();
                distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distinct.dedup();
                let mut m = 0.0_f64;
                for (i, a) in distinct.iter().enumerate() {
                    for b in &distinct[i + 1..] {
                        let d = (a - b).abs();
                        m = m.max(d.min(range as f64 - d));
                    }
                }
                maxd[idx] = m;
            }
            FeatureKind::Categorical => {
                let distinct: HashSet<&str> = cases
                    .iter()
                    .filter_map(|c| c.values[idx].as_label())
                    .collect();
                maxd[idx] = if distinct.len() > 1 { 1.0 } else { 0.0 };
            }
        }
    }
    let fields = TravelFields::resolve(schema)?;
    let mean_price = cases
        .iter()
        .map(|c| c.price(&fields))
        .sum::<f64>()
        / cases.len() as f64;
    let mut stats = CaseBaseStats {
        sigma,
        max_local_distance: maxd,
        mean_price,
        mean_structural_similarity: 0.0,
    };
    stats.mean_structural_similarity = mean_pairwise_similarity(schema, &stats, cases);
    Ok(stats)
}

/// Sample standard deviation (n-1 denominator); `None` when fewer than two
/// values are present or the spread is zero.
fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let var = ss / (n - 1.0);
    (var > 0.0).then(|| var.sqrt())
}

/// Mean structural similarity over all unordered pairs, computed exactly.
/// Parallelized per row with a sequential final reduction so the result is
/// independent of thread count.
fn mean_pairwise_similarity(
    schema: &FeatureSchema,
    stats: &CaseBaseStats,
    cases: &[Case],
) -> f64 {
    let n = cases.len();
    let row_sum = |i: usize| -> f64 {
        let mut acc = 0.0;
        for j in i + 1..n {
            acc += similarity(structural_distance_cases(schema, stats, &cases[i], &cases[j]));
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<f64> = (0..n).into_par_iter().map(row_sum).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<f64> = (0..n).map(row_sum).collect();
    let total: f64 = rows.iter().sum();
    total / (n * (n - 1) / 2) as f64
}

/// Per-feature probabilities of blanking a query value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingnessProfile {
    pub p_accommodation: f64,
    pub p_duration: f64,
    pub p_holiday_type: f64,
}

impl MissingnessProfile {
    pub const NONE: MissingnessProfile = MissingnessProfile {
        p_accommodation: 0.0,
        p_duration: 0.0,
        p_holiday_type: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_accommodation", self.p_accommodation),
            ("p_duration", self.p_duration),
            ("p_holiday_type", self.p_holiday_type),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The solution-correlated features are blanked most aggressively.
impl Default for MissingnessProfile {
    fn default() -> Self {
        MissingnessProfile {
            p_accommodation: 0.15,
            p_duration: 0.3,
            p_holiday_type: 0.6,
        }
    }
}

/// Independently blanks Accommodation, Duration and HolidayType with the
/// profile probabilities. The stream is keyed by (seed, query id), so the
/// outcome does not depend on processing order.
pub fn inject_missing(
    q: &Query,
    fields: &TravelFields,
    profile: &MissingnessProfile,
    seed: u64,
) -> Query {
    let mut rng = rng::stream(seed, rng::salt::MISSING, &[q.id as u64]);
    let mut out = q.clone();
    for (idx, p) in [
        (fields.accommodation, profile.p_accommodation),
        (fields.duration, profile.p_duration),
        (fields.holiday_type, profile.p_holiday_type),
    ] {
        // Always consume a draw so profiles are comparable under one seed.
        let u: f64 = rng.gen();
        if u < p {
            out.values[idx] = FeatureValue::Missing;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::local_distance;

    const SMALL: &str = "\
id,Duration,Persons,Accommodation,Season,HolidayType,Destination,Transport,Price,Hotel,HotelCategory,HotelLocation
0,4,2,2,1,Bathing,Rimini,Coach,500,Hotel Adria,2,Rimini
1,8,2,2,1,Bathing,Rimini,Coach,700,Hotel Regina,2,Rimini
2,12,4,2,7,City,Paris,Plane,900,Hotel Louvre,2,Paris
";

    #[test]
    fn loads_well_formed_file() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        assert_eq!(cb.len(), 3);
        assert_eq!(cb.case(1).hotel.name, "Hotel Regina");
        assert_eq!(cb.case(2).price(&cb.fields), 900.0);
    }

    #[test]
    fn bad_price_cell_names_row_and_column() {
        let bad = SMALL.replace("700", "abc");
        let err = read_csv(bad.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("Price"), "{msg}");
    }

    #[test]
    fn duplicate_and_sparse_ids_rejected() {
        let dup = SMALL.replace("\n1,", "\n0,");
        assert!(read_csv(dup.as_bytes()).is_err());
        let sparse = SMALL.replace("\n2,", "\n5,");
        assert!(read_csv(sparse.as_bytes()).is_err());
    }

    #[test]
    fn header_mismatch_rejected() {
        let bad = SMALL.replace("HolidayType", "Holiday");
        assert!(read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &cb).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SMALL);
    }

    #[test]
    fn missing_cells_round_trip() {
        let with_missing = SMALL.replace("2,12,4", "2,,4").replace("7,City", "7,");
        let cb = read_csv(with_missing.as_bytes()).unwrap();
        assert!(cb.case(2).values[cb.fields.duration].is_missing());
        assert!(cb.case(2).values[cb.fields.holiday_type].is_missing());
        let mut buf = Vec::new();
        write_csv(&mut buf, &cb).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), with_missing);
    }

    #[test]
    fn stats_on_three_hand_built_cases() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        let stats = cb.compute_stats().unwrap();
        let f = &cb.fields;
        assert_eq!(stats.sigma[f.duration], Some(4.0));
        assert_eq!(stats.sigma[f.price], Some(200.0));
        assert_eq!(stats.sigma[f.accommodation], None); // constant
        assert_eq!(stats.max_local_distance[f.accommodation], 1.0);
        assert_eq!(stats.max_local_distance[f.duration], 2.0);
        assert_eq!(stats.max_local_distance[f.season], 6.0);
        assert_eq!(stats.max_local_distance[f.holiday_type], 1.0);
        assert_eq!(stats.mean_price, 700.0);
        // Hand-derived pairwise distances under uniform 1/7 weights:
        // d01 = 1/7 (duration only), d02 = (11+sqrt3)/7, d12 = (10+sqrt3)/7.
        let s3 = 3.0_f64.sqrt();
        let mu = (1.0 / (1.0 + 1.0 / 7.0)
            + 1.0 / (1.0 + (11.0 + s3) / 7.0)
            + 1.0 / (1.0 + (10.0 + s3) / 7.0))
            / 3.0;
        assert!(
            (stats.mean_structural_similarity - mu).abs() < 1e-12,
            "{} vs {mu}",
            stats.mean_structural_similarity
        );
    }

    #[test]
    fn identical_pair_has_mean_similarity_one() {
        let two = "\
id,Duration,Persons,Accommodation,Season,HolidayType,Destination,Transport,Price,Hotel,HotelCategory,HotelLocation
0,4,2,2,1,Bathing,Rimini,Coach,100,Hotel Adria,2,Rimini
1,4,2,2,1,Bathing,Rimini,Coach,300,Hotel Adria,2,Rimini
";
        let cb = read_csv(two.as_bytes()).unwrap();
        let stats = cb.compute_stats().unwrap();
        assert_eq!(stats.mean_structural_similarity, 1.0);
        assert_eq!(stats.mean_price, 200.0);
    }

    #[test]
    fn single_case_base_has_no_stats() {
        let one = SMALL.lines().take(2).collect::<Vec<_>>().join("\n") + "\n";
        let cb = read_csv(one.as_bytes()).unwrap();
        assert!(cb.compute_stats().is_err());
    }

    #[test]
    fn max_local_distance_matches_pairwise_scan() {
        // Brute-force oracle: per feature, the maximum local distance over
        // all fully-present pairs, each term recomputed from the raw
        // definition rather than through the library path.
        let mut text = String::from(
            "id,Duration,Persons,Accommodation,Season,HolidayType,Destination,Transport,Price,Hotel,HotelCategory,HotelLocation\n",
        );
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let types = ["Bathing", "City", "Skiing", "Active"];
        let dests = ["Rimini", "Riccione", "Alassio", "Cervinia"];
        for id in 0..40 {
            let dest = dests[r.gen_range(0..4)];
            let acc = r.gen_range(0..=5);
            let dur = if r.gen_bool(0.2) {
                String::new()
            } else {
                r.gen_range(3..=16).to_string()
            };
            text.push_str(&format!(
                "{id},{dur},{},{acc},{},{},{dest},Coach,{},H{},{acc},{dest}\n",
                r.gen_range(1..=6),
                r.gen_range(1..=12),
                types[r.gen_range(0..4)],
                r.gen_range(300..3000),
                r.gen_range(0..3),
            ));
        }
        let cb = read_csv(text.as_bytes()).unwrap();
        let stats = cb.compute_stats().unwrap();
        for idx in 0..cb.schema.len() {
            let mut want = 0.0_f64;
            for i in 0..cb.len() {
                for j in i + 1..cb.len() {
                    let (a, b) = (&cb.cases[i].values[idx], &cb.cases[j].values[idx]);
                    if a.is_missing() || b.is_missing() {
                        continue;
                    }
                    want = want.max(local_distance(&cb.schema, &stats, idx, a, b));
                }
            }
            assert!(
                (stats.max_local_distance[idx] - want).abs() < 1e-12,
                "feature {idx}: {} vs {want}",
                stats.max_local_distance[idx]
            );
        }
    }

    #[test]
    fn missingness_zero_and_one_profiles() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        let q = Query::from_case(cb.case(0), &cb.schema, 1000.0);
        let same = inject_missing(&q, &cb.fields, &MissingnessProfile::NONE, 7);
        assert_eq!(same, q);
        let all = MissingnessProfile {
            p_accommodation: 1.0,
            p_duration: 1.0,
            p_holiday_type: 1.0,
        };
        let blanked = inject_missing(&q, &cb.fields, &all, 7);
        assert!(blanked.values[cb.fields.accommodation].is_missing());
        assert!(blanked.values[cb.fields.duration].is_missing());
        assert!(blanked.values[cb.fields.holiday_type].is_missing());
        assert!(!blanked.values[cb.fields.season].is_missing());
    }

    #[test]
    fn missingness_rates_match_profile() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        let base = cb.case(0);
        let profile = MissingnessProfile::default();
        let (mut acc, mut dur, mut ht) = (0u32, 0u32, 0u32);
        let n = 10_000;
        for id in 0..n {
            let mut q = Query::from_case(base, &cb.schema, 1000.0);
            q.id = id;
            let q = inject_missing(&q, &cb.fields, &profile, 7);
            acc += q.values[cb.fields.accommodation].is_missing() as u32;
            dur += q.values[cb.fields.duration].is_missing() as u32;
            ht += q.values[cb.fields.holiday_type].is_missing() as u32;
        }
        let rate = |c: u32| c as f64 / n as f64;
        assert!((rate(acc) - 0.15).abs() < 0.02, "{}", rate(acc));
        assert!((rate(dur) - 0.3).abs() < 0.02, "{}", rate(dur));
        assert!((rate(ht) - 0.6).abs() < 0.02, "{}", rate(ht));
    }

    #[test]
    fn injection_is_reproducible_and_seed_sensitive() {
        let cb = read_csv(SMALL.as_bytes()).unwrap();
        let q = Query::from_case(cb.case(1), &cb.schema, 1000.0);
        let profile = MissingnessProfile {
            p_accommodation: 0.5,
            p_duration: 0.5,
            p_holiday_type: 0.5,
        };
        let a = inject_missing(&q, &cb.fields, &profile, 1);
        let b = inject_missing(&q, &cb.fields, &profile, 1);
        assert_eq!(a, b);
        let differs = (0..64).any(|s| inject_missing(&q, &cb.fields, &profile, s) != a);
        assert!(differs);
    }
}
