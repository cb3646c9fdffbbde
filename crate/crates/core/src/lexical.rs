//! Dictionary presence and grammatical-structure scoring (the DP factor).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brevity;
use crate::error::{Error, Result};
use crate::net::{self, Clock, HttpGet, RateLimiter, RetryPolicy, SystemClock, UreqTransport};

const DEFAULT_TAG_LEXICON: &str = include_str!("data/tag_lexicon.tsv");

pub const MEDICAL_DICTIONARY_URL: &str =
    "https://www.dictionaryapi.com/api/v3/references/medical/json";
pub const API_KEY_ENV: &str = "MW_MEDICAL_API_KEY";

/// Score for multi-word patterns missing from the table, and for single
/// words that are not nouns.
pub const UNMATCHED_PATTERN_SCORE: f64 = 0.4;

const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite", "down", "during",
    "except", "for", "from", "in", "inside", "into", "near", "of", "off", "on", "onto", "out",
    "outside", "over", "per", "since", "through", "throughout", "to", "toward", "towards", "under",
    "underneath", "until", "upon", "via", "with", "within", "without",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionarySource {
    File,
    Live,
}

pub trait DictionaryLookup: Send + Sync {
    fn is_present(&self, term: &str) -> Result<bool>;
}

#[derive(Debug, Clone)]
pub struct DictionaryIndex {
    headwords: HashSet<String>,
    source: DictionarySource,
}

fn normalize(term: &str) -> String {
    term.trim().to_lowercase()
}

impl DictionaryIndex {
    pub fn new(headwords: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        DictionaryIndex {
            headwords: headwords
                .into_iter()
                .map(|h| normalize(h.as_ref()))
                .filter(|h| !h.is_empty())
                .collect(),
            source: DictionarySource::File,
        }
    }

    /// One headword per line.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&crate::error::read_to_string(path)?))
    }

    pub fn source(&self) -> DictionarySource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.headwords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headwords.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.headwords.contains(&normalize(term))
    }
}

impl DictionaryLookup for DictionaryIndex {
    fn is_present(&self, term: &str) -> Result<bool> {
        Ok(self.contains(term))
    }
}

/// Live lookups against the Merriam-Webster medical dictionary API. The
/// response is an array of entry objects on a hit, or an array of spelling
/// suggestions (plain strings) on a miss.
pub struct MedicalDictionaryClient {
    transport: Box<dyn HttpGet>,
    clock: Box<dyn Clock>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    api_key: String,
    base_url: String,
}

impl MedicalDictionaryClient {
    pub fn new(transport: Box<dyn HttpGet>, clock: Box<dyn Clock>, api_key: String) -> Self {
        MedicalDictionaryClient {
            transport,
            clock,
            limiter: RateLimiter::per_second(5.0),
            retry: RetryPolicy::default(),
            api_key,
            base_url: MEDICAL_DICTIONARY_URL.to_owned(),
        }
    }

    pub fn from_env() -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(
            Box::new(UreqTransport::default()),
            Box::new(SystemClock::default()),
            key,
        ))
    }
}

/// Whether a medical-dictionary response contains `term` as a headword or
/// listed stem.
pub fn parse_dictionary_response(body: &str, term: &str) -> Result<bool> {
    let wanted = normalize(term);
    let entries: Vec<serde_json::Value> = serde_json::from_str(body)?;
    Ok(entries.iter().any(|entry| {
        let Some(meta) = entry.get("meta") else {
            return false;
        };
        let id_hit = meta
            .get("id")
            .and_then(|v| v.as_str())
            .map(|id| normalize(id.split(':').next().unwrap_or(id)) == wanted)
            .unwrap_or(false);
        let stem_hit = meta
            .get("stems")
            .and_then(|v| v.as_array())
            .map(|stems| {
                stems
                    .iter()
                    .filter_map(|s| s.as_str())
                    .any(|s| normalize(s) == wanted)
            })
            .unwrap_or(false);
        id_hit || stem_hit
    }))
}

impl DictionaryLookup for MedicalDictionaryClient {
    fn is_present(&self, term: &str) -> Result<bool> {
        let url = format!("{}/{}", self.base_url, term.trim());
        let params = [("key", self.api_key.as_str())];
        let body = net::with_retries(self.retry, self.clock.as_ref(), || {
            self.limiter.acquire(self.clock.as_ref());
            self.transport.get(&url, &params)
        })?;
        parse_dictionary_response(&body, term)
    }
}

pub fn dictionary_presence(term: &str, dict: &dyn DictionaryLookup) -> Result<bool> {
    if term.trim().is_empty() {
        return Err(Error::EmptyTerm);
    }
    dict.is_present(term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Adj,
    Verb,
    Adv,
    Prep,
    Det,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 7] = [
        PosTag::Noun,
        PosTag::Adj,
        PosTag::Verb,
        PosTag::Adv,
        PosTag::Prep,
        PosTag::Det,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Adj => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Adv => "ADV",
            PosTag::Prep => "PREP",
            PosTag::Det => "DET",
            PosTag::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown POS tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosTagSequence(pub Vec<PosTag>);

impl PosTagSequence {
    pub fn tags(&self) -> &[PosTag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub trait Tagger: Send + Sync {
    /// Returns exactly one tag per token.
    fn tag(&self, tokens: &[String]) -> Vec<PosTag>;
}

/// Lexicon lookup, then closed-class and suffix rules, defaulting to NOUN.
#[derive(Debug, Clone)]
pub struct RuleTagger {
    lexicon: HashMap<String, PosTag>,
}

impl Default for RuleTagger {
    fn default() -> Self {
        Self::parse_lexicon(DEFAULT_TAG_LEXICON).expect("bundled tag lexicon is valid")
    }
}

impl RuleTagger {
    pub fn empty() -> Self {
        RuleTagger {
            lexicon: HashMap::new(),
        }
    }

    /// `WORD<TAB>TAG` lines.
    pub fn parse_lexicon(text: &str) -> Result<Self> {
        let mut tagger = Self::empty();
        tagger.extend_from(text)?;
        Ok(tagger)
    }

    /// Adds (or overrides) entries from a `WORD<TAB>TAG` file body.
    pub fn extend_from(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::record(idx + 1, "expected WORD<TAB>TAG"))?;
            let tag = tag
                .parse()
                .map_err(|e: Error| Error::record(idx + 1, e.to_string()))?;
            self.lexicon.insert(word.trim().to_lowercase(), tag);
        }
        Ok(())
    }

    pub fn tag_word(&self, word: &str) -> PosTag {
        let w = word.to_lowercase();
        if let Some(&tag) = self.lexicon.get(&w) {
            return tag;
        }
        if PREPOSITIONS.contains(&w.as_str()) {
            return PosTag::Prep;
        }
        if w.chars().all(|c| !c.is_alphabetic()) {
            return PosTag::Other;
        }
        let long_enough = |suffix: &str| w.len() >= suffix.len() + 3 && w.ends_with(suffix);
        if long_enough("ly") {
            PosTag::Adv
        } else if ["ic", "al", "ous", "ary"].into_iter().any(long_enough) {
            PosTag::Adj
        } else if ["ize", "ate"].into_iter().any(long_enough) {
            PosTag::Verb
        } else {
            PosTag::Noun
        }
    }
}

impl Tagger for RuleTagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_word(t)).collect()
    }
}

/// Tags read from a `TERM<TAB>TAG1 TAG2 ...` file, falling back to the rule
/// tagger for terms not listed.
pub struct PretaggedTagger {
    entries: HashMap<String, Vec<PosTag>>,
    fallback: RuleTagger,
}

fn tokens_key(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl PretaggedTagger {
    pub fn parse(text: &str, fallback: RuleTagger) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (term, tags) = line
                .split_once('\t')
                .ok_or_else(|| Error::record(idx + 1, "expected TERM<TAB>TAGS"))?;
            let tokens = brevity::tokenize(term)
                .map_err(|e| Error::record(idx + 1, e.to_string()))?
                .into_tokens();
            let tags: Vec<PosTag> = tags
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_>>()
                .map_err(|e| Error::record(idx + 1, e.to_string()))?;
            if tags.len() != tokens.len() {
                return Err(Error::record(
                    idx + 1,
                    format!("{} tags for {} tokens", tags.len(), tokens.len()),
                ));
            }
            entries.insert(tokens_key(&tokens), tags);
        }
        Ok(PretaggedTagger { entries, fallback })
    }
}

impl Tagger for PretaggedTagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosTag> {
        match self.entries.get(&tokens_key(tokens)) {
            Some(tags) => tags.clone(),
            None => self.fallback.tag(tokens),
        }
    }
}

pub fn pos_tag(tokens: &[String], tagger: &dyn Tagger) -> Result<PosTagSequence> {
    if tokens.is_empty() {
        return Err(Error::EmptyTerm);
    }
    let tags = tagger.tag(tokens);
    debug_assert_eq!(tags.len(), tokens.len());
    Ok(PosTagSequence(tags))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternElement {
    Tag(PosTag),
    /// A PREP followed by at least one more token, whatever its tags.
    PrepPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagPattern(pub Vec<PatternElement>);

impl TagPattern {
    pub fn matches(&self, tags: &[PosTag]) -> bool {
        let mut rest = tags;
        for element in &self.0 {
            match element {
                PatternElement::Tag(t) => match rest.split_first() {
                    Some((head, tail)) if head == t => rest = tail,
                    _ => return false,
                },
                PatternElement::PrepPhrase => {
                    return rest.len() >= 2 && rest[0] == PosTag::Prep;
                }
            }
        }
        rest.is_empty()
    }
}

impl fmt::Display for TagPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| match e {
                PatternElement::Tag(t) => t.to_string(),
                PatternElement::PrepPhrase => "PREP-phrase".to_owned(),
            })
            .collect();
        f.write_str(&parts.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternScoreTable {
    entries: Vec<(TagPattern, f64)>,
}

impl Default for PatternScoreTable {
    /// Ranked part-of-speech combinations for medical terms.
    fn default() -> Self {
        use PatternElement::{PrepPhrase, Tag};
        use PosTag::*;
        let p = |elems: &[PatternElement]| TagPattern(elems.to_vec());
        PatternScoreTable {
            entries: vec![
                (p(&[Tag(Noun), Tag(Noun)]), 1.00),
                (p(&[Tag(Adj), Tag(Noun)]), 0.90),
                (p(&[Tag(Noun), PrepPhrase]), 0.85),
                (p(&[Tag(Verb), Tag(Noun)]), 0.80),
                (p(&[Tag(Adv), Tag(Verb)]), 0.75),
                (p(&[Tag(Adj), Tag(Noun), Tag(Noun)]), 0.70),
                (p(&[Tag(Noun), Tag(Noun), Tag(Noun)]), 0.65),
            ],
        }
    }
}

impl PatternScoreTable {
    pub fn new(entries: Vec<(TagPattern, f64)>) -> Result<Self> {
        if let Some((p, s)) = entries.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument(format!(
                "pattern {p} has score {s} outside [0, 1]"
            )));
        }
        Ok(PatternScoreTable { entries })
    }

    pub fn entries(&self) -> &[(TagPattern, f64)] {
        &self.entries
    }
}

pub fn pattern_score(tags: &PosTagSequence, table: &PatternScoreTable) -> f64 {
    if let [single] = tags.tags() {
        return if *single == PosTag::Noun {
            1.0
        } else {
            UNMATCHED_PATTERN_SCORE
        };
    }
    table
        .entries
        .iter()
        .find(|(p, _)| p.matches(tags.tags()))
        .map(|(_, s)| *s)
        .unwrap_or(UNMATCHED_PATTERN_SCORE)
}

/// Dictionary presence dominates; otherwise the pattern score stands.
pub fn dp_score(present: bool, pattern: f64) -> f64 {
    if present {
        1.0
    } else {
        pattern
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn seq(tags: &[PosTag]) -> PosTagSequence {
        PosTagSequence(tags.to_vec())
    }

    #[test]
    fn dictionary_presence_is_case_insensitive() {
        let d = DictionaryIndex::parse("cholesterol\nHeart Attack\n");
        assert!(dictionary_presence("cholesterol", &d).unwrap());
        assert!(dictionary_presence("Cholesterol", &d).unwrap());
        assert!(dictionary_presence("  heart attack ", &d).unwrap());
        let long = vec!["procedure"; 40].join(" ");
        assert!(!dictionary_presence(&long, &d).unwrap());
        assert!(dictionary_presence(" ", &d).is_err());
    }

    #[test]
    fn rule_tagger_examples() {
        let t = RuleTagger::default();
        assert_eq!(pos_tag(&toks(&["heart", "disease"]), &t).unwrap().tags(), [PosTag::Noun, PosTag::Noun]);
        assert_eq!(pos_tag(&toks(&["chronic", "pain"]), &t).unwrap().tags(), [PosTag::Adj, PosTag::Noun]);
        assert_eq!(pos_tag(&toks(&["in"]), &t).unwrap().tags(), [PosTag::Prep]);
        assert!(pos_tag(&[], &t).is_err());
    }

    #[test]
    fn suffix_rules() {
        let t = RuleTagger::empty();
        assert_eq!(t.tag_word("rapidly"), PosTag::Adv);
        assert_eq!(t.tag_word("chronic"), PosTag::Adj);
        assert_eq!(t.tag_word("renal"), PosTag::Adj);
        assert_eq!(t.tag_word("nervous"), PosTag::Adj);
        assert_eq!(t.tag_word("coronary"), PosTag::Adj);
        assert_eq!(t.tag_word("stabilize"), PosTag::Verb);
        assert_eq!(t.tag_word("aspirate"), PosTag::Verb);
        assert_eq!(t.tag_word("With"), PosTag::Prep);
        assert_eq!(t.tag_word("12"), PosTag::Other);
        assert_eq!(t.tag_word("cholesterol"), PosTag::Noun);
        // Too short for the suffix to be meaningful.
        assert_eq!(t.tag_word("fly"), PosTag::Noun);
    }

    #[test]
    fn lexicon_overrides_suffix() {
        let t = RuleTagger::default();
        assert_eq!(t.tag_word("hospital"), PosTag::Noun);
        assert_eq!(t.tag_word("family"), PosTag::Noun);
        assert_eq!(t.tag_word("the"), PosTag::Det);
    }

    #[test]
    fn pretagged_input_wins() {
        let p = PretaggedTagger::parse("Treat Disease\tVERB NOUN\n", RuleTagger::default()).unwrap();
        assert_eq!(p.tag(&toks(&["treat", "disease"])), [PosTag::Verb, PosTag::Noun]);
        assert_eq!(p.tag(&toks(&["heart", "disease"])), [PosTag::Noun, PosTag::Noun]);
        assert!(PretaggedTagger::parse("a b\tNOUN\n", RuleTagger::default()).is_err());
        assert!(PretaggedTagger::parse("a b\tNOUN FOO\n", RuleTagger::default()).is_err());
    }

    #[test]
    fn pattern_examples() {
        use PosTag::*;
        let table = PatternScoreTable::default();
        assert_eq!(table.entries().len(), 7);
        assert_eq!(pattern_score(&seq(&[Noun, Noun]), &table), 1.00);
        assert_eq!(pattern_score(&seq(&[Adj, Noun]), &table), 0.90);
        assert_eq!(pattern_score(&seq(&[Noun, Noun, Noun]), &table), 0.65);
        assert_eq!(pattern_score(&seq(&[Other, Other, Other, Other]), &table), 0.4);
        assert_eq!(pattern_score(&seq(&[Noun, Prep, Noun]), &table), 0.85);
        assert_eq!(pattern_score(&seq(&[Noun, Prep, Det, Adj, Noun]), &table), 0.85);
        assert_eq!(pattern_score(&seq(&[Noun, Prep]), &table), 0.4);
        assert_eq!(pattern_score(&seq(&[Verb, Noun]), &table), 0.80);
        assert_eq!(pattern_score(&seq(&[Adv, Verb]), &table), 0.75);
        assert_eq!(pattern_score(&seq(&[Adj, Noun, Noun]), &table), 0.70);
        assert_eq!(pattern_score(&seq(&[Noun]), &table), 1.0);
        assert_eq!(pattern_score(&seq(&[Adj]), &table), 0.4);
    }

    #[test]
    fn figure_examples_through_the_tagger() {
        let t = RuleTagger::default();
        let table = PatternScoreTable::default();
        let score = |term: &str| {
            let tokens = brevity::tokenize(term).unwrap().into_tokens();
            pattern_score(&pos_tag(&tokens, &t).unwrap(), &table)
        };
        assert_eq!(score("Heart Disease"), 1.00);
        assert_eq!(score("Chronic Pain"), 0.90);
        assert_eq!(score("Pain in Chest"), 0.85);
        assert_eq!(score("Treat Disease"), 0.80);
        assert_eq!(score("Rapidly Progresses"), 0.75);
        assert_eq!(score("Acute Kidney Injury"), 0.70);
        assert_eq!(score("Blood Pressure Measurement"), 0.65);
    }

    #[test]
    fn table_rejects_out_of_range_scores() {
        let p = TagPattern(vec![PatternElement::Tag(PosTag::Noun)]);
        assert!(PatternScoreTable::new(vec![(p, 1.5)]).is_err());
    }

    #[test]
    fn dp_examples() {
        assert_eq!(dp_score(true, 0.4), 1.0);
        assert_eq!(dp_score(false, 0.90), 0.90);
        assert_eq!(dp_score(false, 0.4), 0.4);
    }

    #[test]
    fn dictionary_response_parsing() {
        let hit = r#"[{"meta":{"id":"cholesterol","stems":["cholesterol","cholesterols"]}}]"#;
        assert!(parse_dictionary_response(hit, "Cholesterol").unwrap());
        let numbered = r#"[{"meta":{"id":"heart attack:1","stems":[]}}]"#;
        assert!(parse_dictionary_response(numbered, "heart attack").unwrap());
        let suggestions = r#"["cholesterol","cholesteric"]"#;
        assert!(!parse_dictionary_response(suggestions, "cholestrol").unwrap());
    }

    fn arb_tag() -> impl Strategy<Value = PosTag> {
        proptest::sample::select(PosTag::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn pattern_codomain(tags in proptest::collection::vec(arb_tag(), 1..8)) {
            let s = pattern_score(&PosTagSequence(tags), &PatternScoreTable::default());
            prop_assert!([1.00, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.4].contains(&s));
        }

        #[test]
        fn tagging_preserves_length(words in proptest::collection::vec("[a-zA-Z0-9]{1,12}", 1..10)) {
            let tokens: Vec<String> = words;
            let tags = pos_tag(&tokens, &RuleTagger::default()).unwrap();
            prop_assert_eq!(tags.len(), tokens.len());
        }

        #[test]
        fn dictionary_dominates(p in 0.0f64..=1.0) {
            prop_assert_eq!(dp_score(true, p), 1.0);
        }
    }
}
