//! Krippendorff's alpha over rating matrices, and the mapping from the
//! five-level survey scale to goodness buckets.
//!
//! Alpha is computed from the coincidence matrix of pairable values:
//! `alpha = 1 - (n - 1) * sum(o_ck * d_ck) / sum(n_c * n_k * d_ck)`.
//! Units with fewer than two ratings carry no pairable values and are
//! dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Bucket;

/// Rater id under which the metric's own buckets are entered.
pub const METRIC_RATER: &str = "metric";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementLevel {
    #[default]
    Nominal,
    Ordinal,
}

impl FromStr for MeasurementLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nominal" => Ok(MeasurementLevel::Nominal),
            "ordinal" => Ok(MeasurementLevel::Ordinal),
            other => Err(Error::InvalidArgument(format!(
                "unknown measurement level {other:?}"
            ))),
        }
    }
}

impl fmt::Display for MeasurementLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementLevel::Nominal => "nominal",
            MeasurementLevel::Ordinal => "ordinal",
        })
    }
}

/// Maps a five-level answer to a bucket: 5 ("Definitely a medical concept")
/// and 4 ("Acceptable") are Good, 3 ("Neutral") is Moderate, 2 ("Doubtful")
/// and 1 ("Definitely not") are Bad.
pub fn map_rating(level: u8) -> Result<Bucket> {
    match level {
        4 | 5 => Ok(Bucket::Good),
        3 => Ok(Bucket::Moderate),
        1 | 2 => Ok(Bucket::Bad),
        other => Err(Error::InvalidArgument(format!(
            "rating level {other} is outside 1..=5"
        ))),
    }
}

/// Survey labels for levels 1 through 5.
pub const LEVEL_LABELS: [&str; 5] = [
    "Definitely not a medical concept",
    "Doubtful as a medical concept",
    "Neutral",
    "Acceptable as a medical concept",
    "Definitely a medical concept",
];

/// A raw rating value: either a five-level answer or a bucket label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatingValue {
    Level(u8),
    Bucket(Bucket),
}

impl RatingValue {
    pub fn bucket(self) -> Result<Bucket> {
        match self {
            RatingValue::Level(l) => map_rating(l),
            RatingValue::Bucket(b) => Ok(b),
        }
    }
}

impl FromStr for RatingValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(level) = s.parse::<u8>() {
            map_rating(level)?;
            return Ok(RatingValue::Level(level));
        }
        if s.chars().all(|c| c.is_ascii_digit() || c == '-') && !s.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "rating level {s} is outside 1..=5"
            )));
        }
        s.parse().map(RatingValue::Bucket)
    }
}

impl fmt::Display for RatingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingValue::Level(l) => write!(f, "{l}"),
            RatingValue::Bucket(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub cui: String,
    pub value: Option<RatingValue>,
}

/// Raters × items grid of buckets; `None` marks a missing rating.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingMatrix {
    raters: Vec<String>,
    items: Vec<String>,
    rater_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    cells: Vec<Vec<Option<Bucket>>>,
}

impl RatingMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    fn rater_slot(&mut self, rater: &str) -> usize {
        if let Some(&i) = self.rater_index.get(rater) {
            return i;
        }
        let i = self.raters.len();
        self.raters.push(rater.to_owned());
        self.rater_index.insert(rater.to_owned(), i);
        self.cells.push(vec![None; self.items.len()]);
        i
    }

    fn item_slot(&mut self, cui: &str) -> usize {
        if let Some(&i) = self.item_index.get(cui) {
            return i;
        }
        let i = self.items.len();
        self.items.push(cui.to_owned());
        self.item_index.insert(cui.to_owned(), i);
        for row in &mut self.cells {
            row.push(None);
        }
        i
    }

    /// Registers an item with no ratings yet.
    pub fn add_item(&mut self, cui: &str) {
        self.item_slot(cui);
    }

    /// Sets (or with `None`, clears) one cell. Returns the previous value.
    pub fn set(&mut self, rater: &str, cui: &str, bucket: Option<Bucket>) -> Option<Bucket> {
        let r = self.rater_slot(rater);
        let i = self.item_slot(cui);
        std::mem::replace(&mut self.cells[r][i], bucket)
    }

    pub fn get(&self, rater: &str, cui: &str) -> Option<Bucket> {
        let r = *self.rater_index.get(rater)?;
        let i = *self.item_index.get(cui)?;
        self.cells[r][i]
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn contains_item(&self, cui: &str) -> bool {
        self.item_index.contains_key(cui)
    }

    /// Ratings given by one rater, in item order.
    pub fn rater_row(&self, rater: &str) -> Option<Vec<(&str, Bucket)>> {
        let r = *self.rater_index.get(rater)?;
        Some(
            self.items
                .iter()
                .zip(&self.cells[r])
                .filter_map(|(cui, b)| b.map(|b| (cui.as_str(), b)))
                .collect(),
        )
    }

    pub fn rating_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Copy restricted to the listed raters (in the given order).
    pub fn select_raters(&self, raters: &[&str]) -> RatingMatrix {
        let mut out = RatingMatrix::new();
        for cui in &self.items {
            out.add_item(cui);
        }
        for rater in raters {
            if let Some(row) = self.rater_row(rater) {
                out.rater_slot(rater);
                for (cui, b) in row {
                    out.set(rater, cui, Some(b));
                }
            }
        }
        out
    }

    /// Non-missing values per item, in rater order.
    pub fn units(&self) -> Vec<Vec<Bucket>> {
        (0..self.items.len())
            .map(|i| self.cells.iter().filter_map(|row| row[i]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReliabilityResult {
    pub alpha: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub level_of_measurement: MeasurementLevel,
}

impl ReliabilityResult {
    pub fn percent(&self) -> f64 {
        self.alpha * 100.0
    }
}

fn bucket_code(b: Bucket) -> u32 {
    match b {
        Bucket::Bad => 0,
        Bucket::Moderate => 1,
        Bucket::Good => 2,
    }
}

/// Alpha over units of ordered category codes. Units with fewer than two
/// values are ignored. Returns `(alpha, pairable units)`.
pub fn alpha_from_units(units: &[Vec<u32>], level: MeasurementLevel) -> Result<(f64, usize)> {
    let categories: Vec<u32> = units
        .iter()
        .filter(|u| u.len() >= 2)
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<u32, usize> = categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let k = categories.len();

    let mut coincidence = vec![vec![0.0f64; k]; k];
    let mut pairable_units = 0;
    for unit in units.iter().filter(|u| u.len() >= 2) {
        pairable_units += 1;
        let mut counts = vec![0.0f64; k];
        for v in unit {
            counts[index[v]] += 1.0;
        }
        let m = unit.len() as f64;
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            for kk in 0..k {
                let pairs = if c == kk {
                    counts[c] * (counts[c] - 1.0)
                } else {
                    counts[c] * counts[kk]
                };
                coincidence[c][kk] += pairs / (m - 1.0);
            }
        }
    }

    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(Error::Degenerate("fewer than two pairable values".into()));
    }

    let delta = |c: usize, kk: usize| -> f64 {
        if c == kk {
            return 0.0;
        }
        match level {
            MeasurementLevel::Nominal => 1.0,
            MeasurementLevel::Ordinal => {
                let (lo, hi) = (c.min(kk), c.max(kk));
                let span: f64 = marginals[lo..=hi].iter().sum();
                let d = span - (marginals[c] + marginals[kk]) / 2.0;
                d * d
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for kk in 0..k {
            let d = delta(c, kk);
            observed += coincidence[c][kk] * d;
            expected += marginals[c] * marginals[kk] * d;
        }
    }
    if expected <= 0.0 {
        return Err(Error::Degenerate(
            "all pairable values fall in a single category".into(),
        ));
    }
    Ok((1.0 - (n - 1.0) * observed / expected, pairable_units))
}

pub fn krippendorff_alpha(matrix: &RatingMatrix, level: MeasurementLevel) -> Result<ReliabilityResult> {
    if matrix.raters().len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 raters, have {}",
            matrix.raters().len()
        )));
    }
    let units: Vec<Vec<u32>> = matrix
        .units()
        .into_iter()
        .map(|u| u.into_iter().map(bucket_code).collect())
        .collect();
    let (alpha, n_items) = alpha_from_units(&units, level)?;
    Ok(ReliabilityResult {
        alpha,
        n_items,
        n_raters: matrix.raters().len(),
        level_of_measurement: level,
    })
}

/// Alpha over the human raters plus the metric, treated as one more rater,
/// on the items both the metric and at least one human rated.
pub fn metric_agreement(
    metric: &HashMap<String, Bucket>,
    ratings: &RatingMatrix,
    level: MeasurementLevel,
) -> Result<ReliabilityResult> {
    let mut combined = RatingMatrix::new();
    let units = ratings.units();
    let common: Vec<&String> = ratings
        .items()
        .iter()
        .zip(&units)
        .filter(|(cui, u)| !u.is_empty() && metric.contains_key(*cui))
        .map(|(cui, _)| cui)
        .collect();
    if common.is_empty() {
        return Err(Error::NoOverlap);
    }
    for rater in ratings.raters() {
        for cui in &common {
            if let Some(b) = ratings.get(rater, cui) {
                combined.set(rater, cui, Some(b));
            }
        }
    }
    for cui in &common {
        combined.set(METRIC_RATER, cui, Some(metric[*cui]));
    }
    krippendorff_alpha(&combined, level)
}
