//! Seeded synthetic travel case bases.
//!
//! The real holiday-package case base is not redistributable, so
//! experiments run on generated data shaped to match its published
//! structure: Duration, Accommodation and HolidayType jointly carry most
//! of the price signal (multiple correlation calibrated into
//! [0.70, 0.85]), and every (Destination, hotel category) pocket hosts at
//! least two distinct hotels so the hotel-replacement rule always has a
//! candidate to consider.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::case::{Case, CaseId, Hotel};
use crate::dataset::CaseBase;
use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{travel_schema, FeatureValue, TravelFields};

pub const HOLIDAY_TYPES: [&str; 8] = [
    "Active",
    "Bathing",
    "City",
    "Education",
    "Language",
    "Recreation",
    "Skiing",
    "Wandering",
];

pub const DESTINATIONS: [&str; 12] = [
    "Alassio",
    "Bibione",
    "Caorle",
    "Cervinia",
    "Cesenatico",
    "Jesolo",
    "Lignano",
    "Maratea",
    "Riccione",
    "Rimini",
    "Venezia",
    "Vieste",
];

pub const TRANSPORTS: [&str; 4] = ["Car", "Coach", "Plane", "Train"];

const HOTEL_BASES: [&str; 3] = ["Aurora", "Bellavista", "Continental"];

/// Price level of each destination relative to the average seaside town.
const DEST_FACTOR: [f64; 12] = [
    1.08, 0.82, 0.90, 1.35, 0.85, 1.00, 0.95, 1.05, 1.00, 1.10, 1.45, 0.80,
];

/// Per-day surcharge of each holiday type, aligned with [`HOLIDAY_TYPES`].
const HTYPE_RATE: [f64; 8] = [8.0, 6.0, 14.0, 4.0, 5.0, 7.0, 20.0, 2.0];

struct Draw {
    duration: u32,
    persons: u32,
    accommodation: u32,
    season: u32,
    holiday_type: usize,
    destination: usize,
    transport: usize,
    noise: f64,
}

fn draw_case(seed: u64, id: CaseId) -> Draw {
    let mut r = rng::stream(seed, rng::salt::GENERATOR, &[id as u64]);
    // Weekly and fortnightly stays dominate.
    let duration_w = [2, 3, 4, 5, 12, 6, 5, 4, 4, 4, 5, 12, 3, 2];
    let persons_w = [15, 40, 10, 20, 8, 7];
    let accommodation_w = [5, 10, 25, 30, 20, 10];
    let season_w = [4, 4, 5, 6, 8, 10, 12, 12, 8, 6, 4, 5];
    let htype_w = [10, 25, 20, 5, 5, 15, 12, 8];
    let transport_w = [35, 30, 10, 25];
    let mut pick = |weights: &[u32]| WeightedIndex::new(weights).unwrap().sample(&mut r);
    let duration = 3 + pick(&duration_w) as u32;
    let persons = 1 + pick(&persons_w) as u32;
    let accommodation = pick(&accommodation_w) as u32;
    let season = 1 + pick(&season_w) as u32;
    let holiday_type = pick(&htype_w);
    let transport = pick(&transport_w);
    let destination = r.gen_range(0..DESTINATIONS.len());
    // Standard normal via Box-Muller.
    let (u1, u2): (f64, f64) = (r.gen::<f64>().max(1e-12), r.gen());
    let noise = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    Draw {
        duration,
        persons,
        accommodation,
        season,
        holiday_type,
        destination,
        transport,
        noise,
    }
}

/// Package price from the final attributes plus the stored per-case noise.
fn price_of(d: &Draw) -> f64 {
    let day_rate = 18.0 + 11.0 * d.accommodation as f64 + HTYPE_RATE[d.holiday_type];
    let season_mult = if (6..=8).contains(&d.season) { 1.08 } else { 1.0 };
    let persons_mult = 1.0 + 0.12 * (d.persons as f64 - 1.0);
    let base = day_rate * d.duration as f64 * DEST_FACTOR[d.destination] * persons_mult
        * season_mult;
    (base * (1.0 + 0.20 * d.noise)).max(60.0).round()
}

/// Generates a validated case base of `n` cases from `seed`.
pub fn generate_synthetic(n: usize, seed: u64) -> Result<CaseBase> {
    if n < 50 {
        return Err(Error::Generator(format!(
            "need at least 50 cases to populate hotel pockets, got {n}"
        )));
    }
    let mut draws: Vec<Draw> = (0..n).map(|id| draw_case(seed, id as CaseId)).collect();

    // Hotel pockets are keyed by (destination, category). A pocket with a
    // single case could never offer an alternative hotel, so singletons
    // are migrated: preferably to the largest pocket of the same category
    // (changing only the destination), otherwise to the largest pocket
    // overall.
    let pocket_sizes = |draws: &[Draw]| -> BTreeMap<(usize, u32), usize> {
        let mut m = BTreeMap::new();
        for d in draws {
            *m.entry((d.destination, d.accommodation)).or_insert(0) += 1;
        }
        m
    };
    let mut sizes = pocket_sizes(&draws);
    let singles: Vec<usize> = (0..n)
        .filter(|&i| sizes[&(draws[i].destination, draws[i].accommodation)] == 1)
        .collect();
    for i in singles {
        let key = (draws[i].destination, draws[i].accommodation);
        if sizes[&key] >= 2 {
            continue; // another migration already filled this pocket
        }
        let same_cat = sizes
            .iter()
            .filter(|(&(dest, cat), _)| cat == key.1 && dest != key.0)
            .max_by_key(|(&(dest, _), &size)| (size, std::cmp::Reverse(dest)));
        let target = match same_cat {
            Some((&k, _)) => k,
            None => {
                let (&k, _) = sizes
                    .iter()
                    .filter(|(&k, _)| k != key)
                    .max_by_key(|(&(dest, cat), &size)| (size, std::cmp::Reverse((dest, cat))))
                    .expect("n >= 50 guarantees at least two pockets");
                k
            }
        };
        *sizes.get_mut(&key).unwrap() -= 1;
        *sizes.get_mut(&target).unwrap() += 1;
        draws[i].destination = target.0;
        draws[i].accommodation = target.1;
        if sizes[&key] == 0 {
            sizes.remove(&key);
        }
    }

    // Hotels: round-robin over a three-name pool per pocket, in id order,
    // so every pocket with at least two cases has two distinct names.
    let mut pocket_rank: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    let schema = travel_schema();
    let fields = TravelFields::resolve(&schema)?;
    let mut cases = Vec::with_capacity(n);
    for (id, d) in draws.iter().enumerate() {
        let key = (d.destination, d.accommodation);
        let rank = pocket_rank.entry(key).or_insert(0);
        let base_name = HOTEL_BASES[*rank % HOTEL_BASES.len()];
        *rank += 1;
        let dest = DESTINATIONS[d.destination];
        let mut values = vec![FeatureValue::Missing; schema.len()];
        values[fields.duration] = FeatureValue::Num(d.duration as f64);
        values[fields.persons] = FeatureValue::Num(d.persons as f64);
        values[fields.accommodation] = FeatureValue::Num(d.accommodation as f64);
        values[fields.season] = FeatureValue::Num(d.season as f64);
        values[fields.holiday_type] =
            FeatureValue::Label(HOLIDAY_TYPES[d.holiday_type].to_string());
        values[fields.destination] = FeatureValue::Label(dest.to_string());
        values[fields.transport] = FeatureValue::Label(TRANSPORTS[d.transport].to_string());
        values[fields.price] = FeatureValue::Num(price_of(d));
        cases.push(Case {
            id: id as CaseId,
            values,
            hotel: Hotel {
                name: format!("Hotel {base_name} {dest}"),
                category: d.accommodation,
                location: dest.to_string(),
            },
        });
    }
    CaseBase::new(schema, cases)
}

/// Multiple correlation of {Duration, Accommodation, HolidayType} with
/// Price: the square root of the R² of an ordinary least-squares fit with
/// one-hot holiday types. The generator is calibrated against this.
pub fn calibration_correlation(cb: &CaseBase) -> Result<f64> {
    let f = &cb.fields;
    let mut types: Vec<&str> = cb
        .cases
        .iter()
        .filter_map(|c| c.values[f.holiday_type].as_label())
        .collect();
    types.sort_unstable();
    types.dedup();
    let rows: Vec<(Vec<f64>, f64)> = cb
        .cases
        .iter()
        .map(|c| {
            let mut x = vec![1.0];
            x.push(c.values[f.duration].as_num().unwrap_or(0.0));
            x.push(c.values[f.accommodation].as_num().unwrap_or(0.0));
            // One-hot with the first level dropped as the baseline.
            for t in types.iter().skip(1) {
                x.push((c.values[f.holiday_type].as_label() == Some(*t)) as u8 as f64);
            }
            (x, c.price(f))
        })
        .collect();
    let n = rows.len();
    let p = rows[0].0.len();
    if n <= p {
        return Err(Error::Stats(format!(
            "need more than {p} cases for the correlation fit, got {n}"
        )));
    }
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (x, y) in &rows {
        for i in 0..p {
            for j in 0..p {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i] += x[i] * y;
        }
    }
    // A whisper of ridge keeps collinear designs (e.g. a constant feature
    // in a hand-built test base) solvable without moving the answer.
    let trace: f64 = (0..p).map(|i| xtx[i][i]).sum();
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += 1e-10 * trace / p as f64;
    }
    let beta = solve(xtx, xty)?;
    let mean_y = rows.iter().map(|(_, y)| y).sum::<f64>() / n as f64;
    let (mut sse, mut sst) = (0.0, 0.0);
    for (x, y) in &rows {
        let pred: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        sse += (y - pred) * (y - pred);
        sst += (y - mean_y) * (y - mean_y);
    }
    if sst == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - sse / sst).max(0.0).sqrt())
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Stats("singular design matrix".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_csv;
    use std::collections::{BTreeMap, BTreeSet};

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(120, 7).unwrap();
        let b = generate_synthetic(120, 7).unwrap();
        let bytes = |cb: &CaseBase| {
            let mut buf = Vec::new();
            write_csv(&mut buf, cb).unwrap();
            buf
        };
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate_synthetic(120, 8).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn too_small_bases_are_rejected() {
        assert!(generate_synthetic(49, 7).is_err());
        assert!(generate_synthetic(50, 7).is_ok());
    }

    #[test]
    fn every_hotel_pocket_offers_an_alternative() {
        for seed in [1, 7, 42] {
            let cb = generate_synthetic(300, seed).unwrap();
            let mut pockets: BTreeMap<(String, u32), BTreeSet<String>> = BTreeMap::new();
            let mut counts: BTreeMap<(String, u32), usize> = BTreeMap::new();
            for c in &cb.cases {
                let key = (c.hotel.location.clone(), c.hotel.category);
                pockets.entry(key.clone()).or_default().insert(c.hotel.name.clone());
                *counts.entry(key).or_default() += 1;
            }
            for (key, count) in counts {
                assert!(count >= 2, "seed {seed}: singleton pocket {key:?}");
                assert!(
                    pockets[&key].len() >= 2,
                    "seed {seed}: pocket {key:?} has one hotel"
                );
            }
        }
    }

    #[test]
    fn calibration_correlation_lands_in_the_window() {
        for seed in [1, 2, 3, 7] {
            let cb = generate_synthetic(1500, seed).unwrap();
            let r = calibration_correlation(&cb).unwrap();
            assert!(
                (0.70..=0.85).contains(&r),
                "seed {seed}: multiple correlation {r:.4} outside [0.70, 0.85]"
            );
        }
    }

    #[test]
    fn correlation_of_an_exact_linear_model_is_one() {
        let mut cb = generate_synthetic(200, 3).unwrap();
        for c in &mut cb.cases {
            let d = c.values[0].as_num().unwrap();
            let a = c.values[2].as_num().unwrap();
            c.values[7] = FeatureValue::Num(40.0 * d + 25.0 * a + 100.0);
        }
        let r = calibration_correlation(&cb).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn correlation_reduces_to_pearson_for_a_single_live_predictor() {
        // Freeze accommodation and holiday type; the multiple correlation
        // must match |pearson(duration, price)| computed independently.
        let mut cb = generate_synthetic(400, 5).unwrap();
        for c in &mut cb.cases {
            c.values[2] = FeatureValue::Num(3.0);
            c.hotel.category = 3;
            c.values[4] = FeatureValue::Label("Bathing".into());
        }
        let r = calibration_correlation(&cb).unwrap();
        let xs: Vec<f64> = cb.cases.iter().map(|c| c.values[0].as_num().unwrap()).collect();
        let ys: Vec<f64> = cb.cases.iter().map(|c| c.values[7].as_num().unwrap()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        let pearson = (cov / (vx.sqrt() * vy.sqrt())).abs();
        assert!((r - pearson).abs() < 1e-6, "{r} vs {pearson}");
    }

    #[test]
    fn generated_bases_round_trip_through_csv() {
        let cb = generate_synthetic(200, 7).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &cb).unwrap();
        let reloaded = crate::dataset::read_csv(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        write_csv(&mut again, &reloaded).unwrap();
        assert_eq!(buf, again);
        assert_eq!(cb.len(), reloaded.len());
    }

    #[test]
    fn marginals_cover_the_declared_domains() {
        let cb = generate_synthetic(1000, 7).unwrap();
        let durations: BTreeSet<i64> = cb
            .cases
            .iter()
            .map(|c| c.values[0].as_num().unwrap() as i64)
            .collect();
        assert!(durations.iter().all(|d| (3..=16).contains(d)));
        assert!(durations.len() > 8, "duration marginal too narrow");
        let seasons: BTreeSet<i64> = cb
            .cases
            .iter()
            .map(|c| c.values[3].as_num().unwrap() as i64)
            .collect();
        assert_eq!(seasons.len(), 12);
        let types: BTreeSet<&str> = cb
            .cases
            .iter()
            .map(|c| c.values[4].as_label().unwrap())
            .collect();
        assert_eq!(types.len(), HOLIDAY_TYPES.len());
        let stats = cb.compute_stats().unwrap();
        assert!(stats.mean_price > 100.0);
    }
}
