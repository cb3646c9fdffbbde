//! The goodness score: a weighted mean of the four factors, plus corpus
//! ranking and Good/Moderate/Bad bucketing.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brevity;
use crate::error::{Error, Result};
use crate::frequency::{self, CountProvider};
use crate::german::{self, CompoundLexicon, Translator};
use crate::ingest::Concept;
use crate::lexical::{self, DictionaryLookup, PatternScoreTable, Tagger};
use crate::net;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub br: f64,
    pub fo: f64,
    pub glm: f64,
    pub dp: f64,
}

impl FactorScores {
    pub fn new(br: f64, fo: f64, glm: f64, dp: f64) -> Result<Self> {
        let f = FactorScores { br, fo, glm, dp };
        for (name, v) in [("br", br), ("fo", fo), ("glm", glm), ("dp", dp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "factor {name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(f)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.br, self.fo, self.glm, self.dp]
    }
}

/// Integer factor weights in `0..=100`, in the order Br, FO, GLM, DP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct Weights([u32; 4]);

impl Weights {
    pub const MAX: u32 = 100;
    /// Starting weights chosen before any survey.
    pub const INITIAL: Weights = Weights([20, 25, 25, 30]);
    /// Weights fitted to the first survey round.
    pub const FIRST_FIT: Weights = Weights([49, 19, 10, 20]);
    /// Weights fitted to the second survey round; the run default.
    pub const FINAL: Weights = Weights([22, 27, 31, 15]);

    pub fn new(w1: u32, w2: u32, w3: u32, w4: u32) -> Result<Self> {
        Self::try_from([w1, w2, w3, w4])
    }

    pub fn values(&self) -> [u32; 4] {
        self.0
    }

    pub fn sum(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> [f64; 4] {
        self.0.map(f64::from)
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::FINAL
    }
}

impl TryFrom<[u32; 4]> for Weights {
    type Error = Error;

    fn try_from(w: [u32; 4]) -> Result<Self> {
        if w.iter().any(|&x| x > Self::MAX) {
            return Err(Error::InvalidArgument(format!(
                "weights {w:?} exceed {}",
                Self::MAX
            )));
        }
        if w.iter().all(|&x| x == 0) {
            return Err(Error::InvalidArgument("weights are all zero".into()));
        }
        Ok(Weights(w))
    }
}

impl From<Weights> for [u32; 4] {
    fn from(w: Weights) -> Self {
        w.0
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

impl FromStr for Weights {
    type Err = Error;

    /// Parses `W1,W2,W3,W4`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad weight {p:?} in {s:?}")))
            })
            .collect::<Result<_>>()?;
        let arr: [u32; 4] = parts
            .try_into()
            .map_err(|_| Error::InvalidArgument(format!("expected 4 weights in {s:?}")))?;
        Weights::try_from(arr)
    }
}

/// Weighted mean for arbitrary non-negative weights.
pub fn weighted_mean(f: &FactorScores, w: [f64; 4]) -> Result<f64> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(format!("invalid weights {w:?}")));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights are all zero".into()));
    }
    let [br, fo, glm, dp] = f.as_array();
    Ok((br * w[0] + fo * w[1] + glm * w[2] + dp * w[3]) / total)
}

pub fn goodness(f: &FactorScores, w: Weights) -> f64 {
    weighted_mean(f, w.as_f64()).expect("Weights are non-negative and not all zero")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    Bad,
    Moderate,
    Good,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Good, Bucket::Moderate, Bucket::Bad];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Good => "Good",
            Bucket::Moderate => "Moderate",
            Bucket::Bad => "Bad",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Ok(Bucket::Good),
            "moderate" => Ok(Bucket::Moderate),
            "bad" => Ok(Bucket::Bad),
            _ => Err(Error::InvalidArgument(format!("unknown bucket {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds {
    lower: f64,
    upper: f64,
}

impl BucketThresholds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower <= upper && upper <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bucket thresholds must satisfy 0 <= lower <= upper <= 1, got ({lower}, {upper})"
            )));
        }
        Ok(BucketThresholds { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `gs >= upper` is Good, `gs < lower` is Bad.
    pub fn classify(&self, gs: f64) -> Bucket {
        if gs >= self.upper {
            Bucket::Good
        } else if gs < self.lower {
            Bucket::Bad
        } else {
            Bucket::Moderate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BucketMode {
    /// Cut at the empirical 1/3 and 2/3 quantiles.
    #[default]
    Quantile,
    Fixed(BucketThresholds),
}

impl FromStr for BucketMode {
    type Err = Error;

    /// `quantile`, or `fixed:LOWER,UPPER`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "quantile" {
            return Ok(BucketMode::Quantile);
        }
        let Some(rest) = s.strip_prefix("fixed:") else {
            return Err(Error::InvalidArgument(format!("unknown bucket mode {s:?}")));
        };
        let (lo, hi) = rest
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("expected fixed:LOWER,UPPER, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad threshold {v:?}")))
        };
        Ok(BucketMode::Fixed(BucketThresholds::new(parse(lo)?, parse(hi)?)?))
    }
}

impl fmt::Display for BucketMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketMode::Quantile => f.write_str("quantile"),
            BucketMode::Fixed(t) => write!(f, "fixed:{},{}", t.lower, t.upper),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Thresholds at the 1/3 and 2/3 quantiles; `None` when every score is
/// equal.
pub fn tertile_thresholds(scores: &[f64]) -> Result<Option<BucketThresholds>> {
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(None);
    }
    let lower = quantile_sorted(&sorted, 1.0 / 3.0);
    let upper = quantile_sorted(&sorted, 2.0 / 3.0);
    Ok(Some(BucketThresholds {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(0.0, 1.0),
    }))
}

pub fn bucketize_scores(scores: &[f64], mode: BucketMode) -> Result<Vec<Bucket>> {
    let thresholds = match mode {
        BucketMode::Fixed(t) => t,
        BucketMode::Quantile => match tertile_thresholds(scores)? {
            Some(t) => t,
            None => return Ok(vec![Bucket::Moderate; scores.len()]),
        },
    };
    Ok(scores.iter().map(|&gs| thresholds.classify(gs)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredConcept {
    pub cui: String,
    pub term: String,
    pub factors: FactorScores,
    pub gs: f64,
}

impl ScoredConcept {
    pub fn new(cui: impl Into<String>, term: impl Into<String>, factors: FactorScores, weights: Weights) -> Self {
        ScoredConcept {
            cui: cui.into(),
            term: term.into(),
            gs: goodness(&factors, weights),
            factors,
        }
    }
}

pub fn bucketize(scored: &[ScoredConcept], mode: BucketMode) -> Result<Vec<Bucket>> {
    let scores: Vec<f64> = scored.iter().map(|s| s.gs).collect();
    bucketize_scores(&scores, mode)
}

/// Descending goodness, ties broken by ascending CUI.
pub fn rank_order(a: &ScoredConcept, b: &ScoredConcept) -> Ordering {
    b.gs.total_cmp(&a.gs).then_with(|| a.cui.cmp(&b.cui))
}

pub fn rank(scored: &mut [ScoredConcept]) {
    scored.sort_by(rank_order);
}

/// Recomputes every goodness score under `weights` and re-ranks.
pub fn rescore(scored: &mut [ScoredConcept], weights: Weights) {
    for s in scored.iter_mut() {
        s.gs = goodness(&s.factors, weights);
    }
    rank(scored);
}

/// Everything needed to compute the four factors for a corpus.
pub struct FactorProviders<'a> {
    pub counts: &'a dyn CountProvider,
    pub translator: &'a dyn Translator,
    pub lexicon: &'a CompoundLexicon,
    pub dictionary: &'a dyn DictionaryLookup,
    pub tagger: &'a dyn Tagger,
    pub patterns: &'a PatternScoreTable,
    /// Overrides the corpus maximum word count.
    pub max_word_count: Option<u32>,
    /// Overrides the corpus maximum PubMed count.
    pub max_count: Option<u64>,
    pub max_in_flight: usize,
}

struct PartialFactors {
    count: u64,
    glm: f64,
    dp: f64,
}

fn partial_factors(c: &Concept, p: &FactorProviders<'_>) -> Result<PartialFactors> {
    let count = p.counts.fetch_count(&c.term)?.count;
    let translation = german::translate(&c.term, p.translator, p.lexicon)?;
    let tokens = brevity::tokenize(&c.term)?.into_tokens();
    let tags = lexical::pos_tag(&tokens, p.tagger)?;
    let present = lexical::dictionary_presence(&c.term, p.dictionary)?;
    Ok(PartialFactors {
        count,
        glm: german::glm_score(&translation),
        dp: lexical::dp_score(present, lexical::pattern_score(&tags, p.patterns)),
    })
}

/// Computes factor scores for every concept, in input order.
///
/// Lookups that miss an offline cache are all collected and reported
/// together; any other failure aborts with the failing term named.
pub fn compute_factors(concepts: &[Concept], p: &FactorProviders<'_>) -> Result<Vec<FactorScores>> {
    if concepts.is_empty() {
        return Ok(Vec::new());
    }
    let results = net::bounded_map(concepts, p.max_in_flight, |c| partial_factors(c, p));

    let mut partials = Vec::with_capacity(results.len());
    let mut misses = Vec::new();
    let mut first_failure = None;
    for (c, r) in concepts.iter().zip(results) {
        match r {
            Ok(v) => partials.push(v),
            Err(Error::CacheMiss(term)) => misses.push(term),
            Err(e) => {
                if first_failure.is_none() {
                    first_failure = Some(Error::Provider {
                        term: c.term.clone(),
                        source: Box::new(e),
                    });
                }
            }
        }
    }
    if let Some(e) = first_failure {
        return Err(e);
    }
    if !misses.is_empty() {
        misses.sort();
        misses.dedup();
        return Err(Error::CacheMisses(misses));
    }

    let max_words = match p.max_word_count {
        Some(m) => m,
        None => concepts.iter().map(|c| c.word_count).max().unwrap_or(1),
    };
    let max_count = p
        .max_count
        .unwrap_or_else(|| partials.iter().map(|x| x.count).max().unwrap_or(0));

    concepts
        .iter()
        .zip(partials)
        .map(|(c, part)| {
            FactorScores::new(
                brevity::brevity_score(c.word_count, max_words)?,
                frequency::frequency_score(part.count, max_count)?,
                part.glm,
                part.dp,
            )
            .map_err(|e| Error::Provider {
                term: c.term.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Scores and ranks a corpus.
pub fn score_corpus(
    concepts: &[Concept],
    providers: &FactorProviders<'_>,
    weights: Weights,
) -> Result<Vec<ScoredConcept>> {
    let factors = compute_factors(concepts, providers)?;
    let mut scored: Vec<ScoredConcept> = concepts
        .iter()
        .zip(factors)
        .map(|(c, f)| ScoredConcept::new(c.cui.clone(), c.term.clone(), f, weights))
        .collect();
    rank(&mut scored);
    Ok(scored)
}

/// `CUI TERM BR FO GLM DP GS BUCKET`, tab-separated, six decimals.
pub fn format_scored(scored: &[ScoredConcept], buckets: &[Bucket]) -> String {
    let mut out = String::new();
    for (s, b) in scored.iter().zip(buckets) {
        let f = &s.factors;
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            s.cui, s.term, f.br, f.fo, f.glm, f.dp, s.gs, b
        );
    }
    out
}

/// Reads a scored file back into concepts and buckets.
pub fn parse_scored(text: &str) -> Result<Vec<(ScoredConcept, Bucket)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(Error::record(
                idx + 1,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| Error::record(idx + 1, format!("bad number {:?}", fields[i])))
        };
        let factors = FactorScores::new(num(2)?, num(3)?, num(4)?, num(5)?)
            .map_err(|e| Error::record(idx + 1, e.to_string()))?;
        let bucket = fields[7]
            .parse()
            .map_err(|e: Error| Error::record(idx + 1, e.to_string()))?;
        out.push((
            ScoredConcept {
                cui: fields[0].to_owned(),
                term: fields[1].to_owned(),
                factors,
                gs: num(6)?,
            },
            bucket,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(br: f64, fo: f64, glm: f64, dp: f64) -> FactorScores {
        FactorScores::new(br, fo, glm, dp).unwrap()
    }

    fn sc(cui: &str, gs: f64) -> ScoredConcept {
        ScoredConcept {
            cui: cui.into(),
            term: cui.to_lowercase(),
            factors: f(gs, gs, gs, gs),
            gs,
        }
    }

    #[test]
    fn goodness_examples() {
        assert_eq!(goodness(&f(1.0, 1.0, 1.0, 1.0), Weights::new(3, 0, 7, 1).unwrap()), 1.0);
        // (21.8911 + 13.5 + 31 + 15) / 95
        let gs = goodness(&f(0.99505, 0.5, 1.0, 1.0), Weights::FINAL);
        assert!((gs - 81.3911 / 95.0).abs() < 1e-12);
        assert!((gs - 0.856749).abs() < 1e-6);
        for x in [0.0, 0.25, 0.6180339, 1.0] {
            assert!((goodness(&f(x, x, x, x), Weights::INITIAL) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_validation() {
        assert!(Weights::new(0, 0, 0, 0).is_err());
        assert!(Weights::new(101, 0, 0, 0).is_err());
        assert_eq!("22, 27,31,15".parse::<Weights>().unwrap(), Weights::FINAL);
        assert!("1,2,3".parse::<Weights>().is_err());
        assert_eq!(Weights::FINAL.sum(), 95);
        assert_eq!(Weights::default(), Weights::FINAL);
        assert!(weighted_mean(&f(1.0, 1.0, 1.0, 1.0), [0.0; 4]).is_err());
        assert!(FactorScores::new(1.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn ranking_and_ties() {
        let mut v = vec![sc("C1", 0.9), sc("C2", 0.1), sc("C3", 0.5)];
        rank(&mut v);
        assert_eq!(v.iter().map(|s| s.gs).collect::<Vec<_>>(), [0.9, 0.5, 0.1]);
        let mut v = vec![sc("C9", 0.4), sc("C2", 0.4)];
        rank(&mut v);
        assert_eq!(v[0].cui, "C2");
        let mut empty: Vec<ScoredConcept> = vec![];
        rank(&mut empty);
    }

    #[test]
    fn quantile_buckets() {
        use Bucket::*;
        assert_eq!(bucketize_scores(&[0.1, 0.5, 0.9], BucketMode::Quantile).unwrap(), [Bad, Moderate, Good]);
        assert_eq!(bucketize_scores(&[0.3; 5], BucketMode::Quantile).unwrap(), [Moderate; 5]);
        assert!(bucketize_scores(&[], BucketMode::Quantile).is_err());
    }

    #[test]
    fn tertile_oracle() {
        // Sorted ranks 0..8 of nine points: q(1/3) = x[2.667], q(2/3) = x[5.333].
        let xs: Vec<f64> = (0..9).map(|i| f64::from(i) / 10.0).collect();
        let t = tertile_thresholds(&xs).unwrap().unwrap();
        assert!((t.lower() - (0.2 + 2.0 / 3.0 * 0.1)).abs() < 1e-12);
        assert!((t.upper() - (0.5 + 1.0 / 3.0 * 0.1)).abs() < 1e-12);
        let b = bucketize_scores(&xs, BucketMode::Quantile).unwrap();
        let count = |k| b.iter().filter(|&&x| x == k).count();
        assert_eq!((count(Bucket::Bad), count(Bucket::Moderate), count(Bucket::Good)), (3, 3, 3));
    }

    #[test]
    fn fixed_buckets() {
        let mode = BucketMode::Fixed(BucketThresholds::new(0.33, 0.66).unwrap());
        assert_eq!(bucketize_scores(&[0.66, 0.3299, 0.33], mode).unwrap(), [Bucket::Good, Bucket::Bad, Bucket::Moderate]);
        assert!(BucketThresholds::new(0.7, 0.2).is_err());
        assert!(BucketThresholds::new(-0.1, 0.2).is_err());
        assert_eq!("fixed:0.33,0.66".parse::<BucketMode>().unwrap(), mode);
        assert_eq!("quantile".parse::<BucketMode>().unwrap(), BucketMode::Quantile);
        assert!("fixed:0.9,0.1".parse::<BucketMode>().is_err());
    }

    #[test]
    fn scored_file_round_trip() {
        let mut v = vec![sc("C1", 0.9), sc("C2", 0.1), sc("C3", 0.5)];
        rank(&mut v);
        let b = bucketize(&v, BucketMode::Quantile).unwrap();
        let text = format_scored(&v, &b);
        assert!(text.starts_with("C1\tc1\t0.900000\t0.900000\t0.900000\t0.900000\t0.900000\tGood\n"));
        let back = parse_scored(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].1, Bucket::Bad);
        assert!(parse_scored("C1\tx\t1\n").is_err());
    }

    fn arb_factors() -> impl Strategy<Value = FactorScores> {
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b, c, d)| f(a, b, c, d))
    }

    fn arb_weights() -> impl Strategy<Value = Weights> {
        (0u32..=100, 0u32..=100, 0u32..=100, 0u32..=100)
            .prop_filter("not all zero", |(a, b, c, d)| a + b + c + d > 0)
            .prop_map(|(a, b, c, d)| Weights::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn scale_invariance(fs in arb_factors(), w in arb_weights(), k in 1u32..10) {
            let base = goodness(&fs, w);
            let scaled = weighted_mean(&fs, w.as_f64().map(|x| x * f64::from(k))).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn monotone_in_each_factor(fs in arb_factors(), w in arb_weights(), which in 0usize..4, bump in 0.0f64..1.0) {
            let mut arr = fs.as_array();
            arr[which] = (arr[which] + bump).min(1.0);
            let raised = f(arr[0], arr[1], arr[2], arr[3]);
            prop_assert!(goodness(&raised, w) >= goodness(&fs, w) - 1e-15);
        }
    }
}
