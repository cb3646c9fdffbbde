//! The survey iteration: sample 25 top and 25 bottom concepts, collect
//! ratings, report agreement, and refit the weights.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{self, ObjectiveSpec, OptimizationTrace, Strategy};
use crate::reliability::{
    krippendorff_alpha, metric_agreement, MeasurementLevel, RatingMatrix, RatingRecord, RatingValue,
};
use crate::scoring::{bucketize_scores, rank_order, rescore, Bucket, BucketMode, ScoredConcept, Weights};

pub const PER_POOL: usize = 25;
pub const DEFAULT_POOL_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolTag {
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurveyItem {
    pub cui: String,
    pub term: String,
    pub pool: PoolTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurveySample {
    pub iteration: u32,
    pub seed: u64,
    pub pool_size: usize,
    pub weights: Weights,
    /// Presentation order.
    pub items: Vec<SurveyItem>,
}

impl SurveySample {
    pub fn cuis(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.cui.as_str())
    }

    pub fn contains(&self, cui: &str) -> bool {
        self.items.iter().any(|i| i.cui == cui)
    }

    /// `CUI<TAB>TERM` per line, in presentation order. No scores or pool tags.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let _ = writeln!(out, "{}\t{}", item.cui, item.term);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draws 25 concepts uniformly from the top `pool_size` of a ranked list and
/// 25 from the bottom `pool_size`, then shuffles them together.
pub fn sample_survey(
    ranked: &[ScoredConcept],
    pool_size: usize,
    seed: u64,
    iteration: u32,
    weights: Weights,
) -> Result<SurveySample> {
    if pool_size < PER_POOL {
        return Err(Error::InvalidArgument(format!(
            "pool size {pool_size} is below {PER_POOL}"
        )));
    }
    if ranked.len() < 2 * pool_size {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} concepts is too small for two pools of {pool_size}",
            ranked.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = &ranked[..pool_size];
    let bottom = &ranked[ranked.len() - pool_size..];
    let mut items: Vec<SurveyItem> = Vec::with_capacity(2 * PER_POOL);
    for (pool, tag) in [(top, PoolTag::Top), (bottom, PoolTag::Bottom)] {
        let mut picks = index::sample(&mut rng, pool.len(), PER_POOL).into_vec();
        picks.sort_unstable();
        items.extend(picks.into_iter().map(|i| SurveyItem {
            cui: pool[i].cui.clone(),
            term: pool[i].term.clone(),
            pool: tag,
        }));
    }
    items.shuffle(&mut rng);
    Ok(SurveySample {
        iteration,
        seed,
        pool_size,
        weights,
        items,
    })
}

/// Ratings file contents plus the warnings raised while reading it.
#[derive(Debug, Clone, Default)]
pub struct RatingsIngest {
    pub matrix: RatingMatrix,
    /// Accepted rows in file order, with their raw values.
    pub records: Vec<RatingRecord>,
    pub warnings: Vec<String>,
}

/// Reads `RATER_ID,CUI,LEVEL` rows. LEVEL is 1-5 or a bucket label; blank
/// means missing. A leading header row is skipped. Rows for CUIs outside
/// `known` are dropped with a warning; repeated (rater, cui) pairs keep the
/// last row.
pub fn ingest_ratings(text: &str, known: Option<&HashSet<String>>) -> Result<RatingsIngest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = RatingsIngest::default();
    let mut written: HashSet<(String, String)> = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::record(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.iter().all(str::is_empty) {
            continue;
        }
        if line == 1 && row.get(0).is_some_and(|f| f.eq_ignore_ascii_case("rater_id")) {
            continue;
        }
        if row.len() != 3 {
            return Err(Error::record(
                line,
                format!("expected RATER_ID,CUI,LEVEL, found {} field(s)", row.len()),
            ));
        }
        let (rater, cui, level) = (&row[0], &row[1], &row[2]);
        if rater.is_empty() || cui.is_empty() {
            return Err(Error::record(line, "empty rater id or cui"));
        }
        let value = if level.is_empty() {
            None
        } else {
            Some(RatingValue::from_str(level).map_err(|e| Error::record(line, e.to_string()))?)
        };
        let bucket = value
            .map(RatingValue::bucket)
            .transpose()
            .map_err(|e| Error::record(line, e.to_string()))?;
        if known.is_some_and(|k| !k.contains(cui)) {
            let msg = format!("line {line}: unknown cui {cui}, row ignored");
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        if !written.insert((rater.to_owned(), cui.to_owned())) {
            let msg = format!("line {line}: duplicate rating by {rater} for {cui}, keeping the later one");
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        out.matrix.set(rater, cui, bucket);
        out.records.push(RatingRecord {
            rater_id: rater.to_owned(),
            cui: cui.to_owned(),
            value,
        });
    }
    Ok(out)
}

/// Which concepts share one set of tertile cuts when the metric's buckets
/// are compared with ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketScope {
    /// The whole scored corpus.
    #[default]
    Corpus,
    /// Only the concepts that carry at least one rating.
    Rated,
}

impl FromStr for BucketScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "corpus" => Ok(BucketScope::Corpus),
            "rated" => Ok(BucketScope::Rated),
            other => Err(Error::InvalidArgument(format!(
                "unknown bucket scope {other:?} (expected corpus or rated)"
            ))),
        }
    }
}

impl fmt::Display for BucketScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BucketScope::Corpus => "corpus",
            BucketScope::Rated => "rated",
        })
    }
}

/// How metric buckets are formed and compared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgreementSettings {
    pub mode: BucketMode,
    pub scope: BucketScope,
    pub level: MeasurementLevel,
}

fn rated_cuis(ratings: &RatingMatrix) -> HashSet<&str> {
    ratings
        .items()
        .iter()
        .zip(ratings.units())
        .filter(|(_, u)| !u.is_empty())
        .map(|(c, _)| c.as_str())
        .collect()
}

fn in_scope<'a>(
    scored: &'a [ScoredConcept],
    ratings: &RatingMatrix,
    scope: BucketScope,
) -> Vec<&'a ScoredConcept> {
    match scope {
        BucketScope::Corpus => scored.iter().collect(),
        BucketScope::Rated => {
            let rated = rated_cuis(ratings);
            scored.iter().filter(|s| rated.contains(s.cui.as_str())).collect()
        }
    }
}

/// The metric's bucket for every in-scope concept, from the scores as given.
pub fn metric_buckets(
    scored: &[ScoredConcept],
    ratings: &RatingMatrix,
    settings: &AgreementSettings,
) -> Result<HashMap<String, Bucket>> {
    let chosen = in_scope(scored, ratings, settings.scope);
    if chosen.is_empty() {
        return Err(Error::NoOverlap);
    }
    let scores: Vec<f64> = chosen.iter().map(|s| s.gs).collect();
    let buckets = bucketize_scores(&scores, settings.mode)?;
    Ok(chosen.iter().map(|s| s.cui.clone()).zip(buckets).collect())
}

/// Objective over the in-scope factor table against `ratings`.
pub fn objective_spec(
    scored: &[ScoredConcept],
    ratings: &RatingMatrix,
    settings: &AgreementSettings,
) -> Result<ObjectiveSpec> {
    let table: Vec<(String, _)> = in_scope(scored, ratings, settings.scope)
        .into_iter()
        .map(|s| (s.cui.clone(), s.factors))
        .collect();
    if table.is_empty() {
        return Err(Error::NoOverlap);
    }
    ObjectiveSpec::new(&table, ratings, settings.mode, settings.level)
}

/// The rater with the most ratings; ties go to the smallest id.
pub fn default_reference_rater(ratings: &RatingMatrix) -> Option<String> {
    ratings
        .raters()
        .iter()
        .map(|r| (r, ratings.rater_row(r).map_or(0, |row| row.len())))
        .filter(|(_, n)| *n > 0)
        .max_by(|(a, na), (b, nb)| na.cmp(nb).then_with(|| b.cmp(a)))
        .map(|(r, _)| r.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    pub good: usize,
    pub moderate: usize,
    pub bad: usize,
}

impl BucketCounts {
    pub fn add(&mut self, b: Bucket) {
        match b {
            Bucket::Good => self.good += 1,
            Bucket::Moderate => self.moderate += 1,
            Bucket::Bad => self.bad += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.good + self.moderate + self.bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    fn include(range: &mut Option<ScoreRange>, gs: f64) {
        *range = Some(match *range {
            None => ScoreRange { min: gs, max: gs },
            Some(r) => ScoreRange {
                min: r.min.min(gs),
                max: r.max.max(gs),
            },
        });
    }
}

/// Goodness-score span of the items a rater put in each bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketRanges {
    pub good: Option<ScoreRange>,
    pub moderate: Option<ScoreRange>,
    pub bad: Option<ScoreRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RaterHistogram {
    pub counts: BucketCounts,
    pub score_ranges: BucketRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationReport {
    pub iteration: u32,
    pub weights_used: Weights,
    pub rated_items: usize,
    /// Alpha among the human raters; absent with fewer than two raters or
    /// when undefined.
    pub alpha_all_raters: Option<f64>,
    /// Alpha over the human raters plus the metric.
    pub alpha_with_metric: Option<f64>,
    /// Metric against each rater alone; absent when undefined.
    pub alpha_metric_vs_each_rater: BTreeMap<String, Option<f64>>,
    pub metric_histogram: BucketCounts,
    pub histograms: BTreeMap<String, RaterHistogram>,
}

/// Agreement and histograms for one iteration. `scored` must carry the
/// scores under `sample.weights`.
pub fn iteration_report(
    sample: &SurveySample,
    ratings: &RatingMatrix,
    scored: &[ScoredConcept],
    settings: &AgreementSettings,
) -> Result<IterationReport> {
    let in_sample: Vec<&str> = ratings
        .items()
        .iter()
        .map(String::as_str)
        .filter(|c| sample.contains(c))
        .collect();
    let raters: Vec<&str> = ratings.raters().iter().map(String::as_str).collect();
    let restricted = {
        let mut m = RatingMatrix::new();
        for cui in &in_sample {
            for rater in &raters {
                if let Some(b) = ratings.get(rater, cui) {
                    m.set(rater, cui, Some(b));
                }
            }
        }
        m
    };
    if restricted.rating_count() == 0 {
        return Err(Error::NoOverlap);
    }

    let metric = metric_buckets(scored, &restricted, settings)?;
    let gs: HashMap<&str, f64> = scored.iter().map(|s| (s.cui.as_str(), s.gs)).collect();

    let alpha_all_raters = if restricted.raters().len() >= 2 {
        krippendorff_alpha(&restricted, settings.level).ok().map(|r| r.alpha)
    } else {
        None
    };
    let alpha_with_metric = match metric_agreement(&metric, &restricted, settings.level) {
        Ok(r) => Some(r.alpha),
        Err(Error::NoOverlap) => return Err(Error::NoOverlap),
        Err(_) => None,
    };

    let mut vs_each = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    let mut rated: HashSet<&str> = HashSet::new();
    for rater in restricted.raters() {
        let one = restricted.select_raters(&[rater]);
        let alpha = metric_agreement(&metric, &one, settings.level).ok().map(|r| r.alpha);
        vs_each.insert(rater.clone(), alpha);

        let mut counts = BucketCounts::default();
        let mut ranges = BucketRanges::default();
        for (cui, b) in restricted.rater_row(rater).unwrap_or_default() {
            rated.insert(cui);
            counts.add(b);
            if let Some(&g) = gs.get(cui) {
                let slot = match b {
                    Bucket::Good => &mut ranges.good,
                    Bucket::Moderate => &mut ranges.moderate,
                    Bucket::Bad => &mut ranges.bad,
                };
                ScoreRange::include(slot, g);
            }
        }
        histograms.insert(
            rater.clone(),
            RaterHistogram {
                counts,
                score_ranges: ranges,
            },
        );
    }

    let mut metric_histogram = BucketCounts::default();
    for cui in &rated {
        if let Some(&b) = metric.get(*cui) {
            metric_histogram.add(b);
        }
    }

    Ok(IterationReport {
        iteration: sample.iteration,
        weights_used: sample.weights,
        rated_items: rated.len(),
        alpha_all_raters,
        alpha_with_metric,
        alpha_metric_vs_each_rater: vs_each,
        metric_histogram,
        histograms,
    })
}

fn fmt_alpha(a: Option<f64>) -> String {
    a.map_or_else(|| "-".to_string(), |a| format!("{a:.6}"))
}

fn fmt_range(r: Option<ScoreRange>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{:.6}..{:.6}", r.min, r.max))
}

impl IterationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "iteration = {}", self.iteration);
        let _ = writeln!(out, "weights = {}", self.weights_used);
        let _ = writeln!(out, "rated_items = {}", self.rated_items);
        let pct = |a: Option<f64>| a.map_or_else(|| "-".into(), |a| format!("{:.2}%", a * 100.0));
        let _ = writeln!(out, "alpha.raters = {}", fmt_alpha(self.alpha_all_raters));
        let _ = writeln!(out, "alpha.raters.percent = {}", pct(self.alpha_all_raters));
        let _ = writeln!(out, "alpha.with_metric = {}", fmt_alpha(self.alpha_with_metric));
        let _ = writeln!(out, "alpha.with_metric.percent = {}", pct(self.alpha_with_metric));
        let m = &self.metric_histogram;
        let _ = writeln!(out, "metric.counts = good:{} moderate:{} bad:{}", m.good, m.moderate, m.bad);
        for (rater, alpha) in &self.alpha_metric_vs_each_rater {
            let _ = writeln!(out, "rater.{rater}.alpha_vs_metric = {}", fmt_alpha(*alpha));
            if let Some(h) = self.histograms.get(rater) {
                let c = &h.counts;
                let _ = writeln!(
                    out,
                    "rater.{rater}.counts = good:{} moderate:{} bad:{}",
                    c.good, c.moderate, c.bad
                );
                let r = &h.score_ranges;
                let _ = writeln!(out, "rater.{rater}.range.good = {}", fmt_range(r.good));
                let _ = writeln!(out, "rater.{rater}.range.moderate = {}", fmt_range(r.moderate));
                let _ = writeln!(out, "rater.{rater}.range.bad = {}", fmt_range(r.bad));
            }
        }
        out
    }
}

/// Optimization settings for moving to the next iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvanceOptions {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub grid_step: u32,
    pub init_points: usize,
    pub pool_size: usize,
    /// Defaults to [`default_reference_rater`].
    pub reference_rater: Option<String>,
    pub agreement: AgreementSettings,
}

impl Default for AdvanceOptions {
    fn default() -> Self {
        AdvanceOptions {
            strategy: Strategy::Smbo,
            budget: optimize::DEFAULT_BUDGET,
            seed: 0,
            grid_step: optimize::DEFAULT_GRID_STEP,
            init_points: optimize::DEFAULT_INIT_POINTS,
            pool_size: DEFAULT_POOL_SIZE,
            reference_rater: None,
            agreement: AgreementSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdvanceOutcome {
    pub reference_rater: String,
    pub previous_weights: Weights,
    pub previous_value: f64,
    pub trace: OptimizationTrace,
    /// The optimizer's best, or the previous weights when those scored
    /// strictly higher.
    pub weights: Weights,
    pub value: f64,
    pub rescored: Vec<ScoredConcept>,
    pub next_sample: SurveySample,
}

/// Fits weights to the reference rater, rescores the corpus and samples the
/// next iteration.
pub fn advance(
    scored: &[ScoredConcept],
    sample: &SurveySample,
    ratings: &RatingMatrix,
    opts: &AdvanceOptions,
) -> Result<AdvanceOutcome> {
    let reference = match &opts.reference_rater {
        Some(r) => r.clone(),
        None => default_reference_rater(ratings)
            .ok_or_else(|| Error::InvalidArgument("no ratings to fit against".into()))?,
    };
    if !ratings.raters().contains(&reference) {
        return Err(Error::InvalidArgument(format!("unknown rater {reference:?}")));
    }
    let reference_matrix = ratings.select_raters(&[reference.as_str()]);
    let spec = objective_spec(scored, &reference_matrix, &opts.agreement)?;
    let trace = optimize::optimize(
        &spec,
        opts.strategy,
        opts.budget,
        opts.seed,
        opts.grid_step,
        opts.init_points,
    )?;
    let previous_value = optimize::evaluate_objective(&spec, sample.weights);
    let (weights, value) = if previous_value > trace.best_value {
        (sample.weights, previous_value)
    } else {
        (trace.best_weights, trace.best_value)
    };
    let mut rescored = scored.to_vec();
    rescore(&mut rescored, weights);
    debug_assert!(rescored.windows(2).all(|w| rank_order(&w[0], &w[1]).is_le()));
    let next_sample = sample_survey(
        &rescored,
        opts.pool_size,
        opts.seed,
        sample.iteration + 1,
        weights,
    )?;
    Ok(AdvanceOutcome {
        reference_rater: reference,
        previous_weights: sample.weights,
        previous_value,
        trace,
        weights,
        value,
        rescored,
        next_sample,
    })
}
