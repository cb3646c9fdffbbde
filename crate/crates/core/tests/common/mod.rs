//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use concept_goodness::reliability::{MeasurementLevel, RatingMatrix};
use concept_goodness::scoring::{bucketize_scores, goodness, Bucket, BucketMode, FactorScores, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Krippendorff's alpha by exhaustive pair counting, without a coincidence
/// matrix. Units are rows of optional category codes.
pub fn brute_force_alpha(units: &[Vec<Option<u32>>], level: MeasurementLevel) -> Option<f64> {
    let pairable: Vec<Vec<u32>> = units
        .iter()
        .map(|u| u.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u: &Vec<u32>| u.len() >= 2)
        .collect();
    let all: Vec<u32> = pairable.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if all.len() < 2 {
        return None;
    }
    let count = |c: u32| all.iter().filter(|&&v| v == c).count() as f64;
    let delta = |a: u32, b: u32| -> f64 {
        if a == b {
            return 0.0;
        }
        match level {
            MeasurementLevel::Nominal => 1.0,
            MeasurementLevel::Ordinal => {
                let (lo, hi) = (a.min(b), a.max(b));
                let mut span = 0.0;
                let mut seen = std::collections::BTreeSet::new();
                for &v in &all {
                    if v >= lo && v <= hi && seen.insert(v) {
                        span += count(v);
                    }
                }
                let d = span - (count(a) + count(b)) / 2.0;
                d * d
            }
        }
    };
    let mut observed = 0.0;
    for u in &pairable {
        let m = u.len() as f64;
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta(u[i], u[j]);
                }
            }
        }
        observed += s / (m - 1.0);
    }
    observed /= n;
    let mut expected = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                expected += delta(all[i], all[j]);
            }
        }
    }
    expected /= n * (n - 1.0);
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - observed / expected)
}

pub fn bucket_code(b: Bucket) -> u32 {
    match b {
        Bucket::Bad => 0,
        Bucket::Moderate => 1,
        Bucket::Good => 2,
    }
}

/// Units (items) of a rating matrix, one optional code per rater.
pub fn matrix_units(m: &RatingMatrix) -> Vec<Vec<Option<u32>>> {
    m.items()
        .iter()
        .map(|cui| {
            m.raters()
                .iter()
                .map(|r| m.get(r, cui).map(bucket_code))
                .collect()
        })
        .collect()
}

/// A random raters x items matrix with roughly `missing` of cells empty.
pub fn random_matrix(rng: &mut ChaCha8Rng, raters: usize, items: usize, missing: f64) -> RatingMatrix {
    let mut m = RatingMatrix::new();
    for i in 0..items {
        let cui = format!("C{i:04}");
        m.add_item(&cui);
        for r in 0..raters {
            let rater = format!("r{r}");
            let cell = if rng.random_bool(missing) {
                None
            } else {
                Some(Bucket::ALL[rng.random_range(0..3)])
            };
            m.set(&rater, &cui, cell);
        }
    }
    m
}

pub fn random_factors(rng: &mut ChaCha8Rng) -> FactorScores {
    FactorScores::new(rng.random(), rng.random(), rng.random(), rng.random()).unwrap()
}

pub fn tertile_buckets(table: &[(String, FactorScores)], w: Weights) -> Vec<Bucket> {
    let scores: Vec<f64> = table.iter().map(|(_, f)| goodness(f, w)).collect();
    bucketize_scores(&scores, BucketMode::Quantile).unwrap()
}

/// Synthetic corpus of `n` concepts with uniform random factors, and a
/// reference rater whose buckets are the metric's own buckets under `planted`.
///
/// Concepts whose planted score falls within `margin` of a tertile cut are
/// redrawn until none remain, so nearby weight vectors can reproduce the
/// planted buckets exactly. `margin = 0.0` keeps the raw draw.
pub fn planted_corpus(
    n: usize,
    seed: u64,
    planted: Weights,
    margin: f64,
) -> (Vec<(String, FactorScores)>, RatingMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors: Vec<FactorScores> = (0..n).map(|_| random_factors(&mut rng)).collect();
    if margin > 0.0 {
        for _round in 0..1000 {
            let scores: Vec<f64> = factors.iter().map(|f| goodness(f, planted)).collect();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |p: f64| {
                let h = (sorted.len() - 1) as f64 * p;
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(sorted.len() - 1);
                sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
            };
            let cuts = [q(1.0 / 3.0), q(2.0 / 3.0)];
            let close: Vec<usize> = scores
                .iter()
                .enumerate()
                .filter(|(_, &s)| cuts.iter().any(|c| (s - c).abs() < margin))
                .map(|(i, _)| i)
                .collect();
            if close.is_empty() {
                break;
            }
            for i in close {
                factors[i] = random_factors(&mut rng);
            }
        }
    }
    let table: Vec<(String, FactorScores)> = factors
        .into_iter()
        .enumerate()
        .map(|(i, f)| (format!("S{i:04}"), f))
        .collect();
    let mut reference = RatingMatrix::new();
    for ((cui, _), b) in table.iter().zip(tertile_buckets(&table, planted)) {
        reference.set("reference", cui, Some(b));
    }
    (table, reference)
}
