//! German language mappability (GLM).
//!
//! An English term is translated into German and scored by how the German
//! word count compares with the English one, in five bands of English word
//! count. A German compound in the translation earns +0.1, capped at 1.0.
//! Scores are computed in tenths so the reward arithmetic is exact.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::Deserialize;

use crate::brevity;
use crate::error::{Error, Result};
use crate::net::{self, Clock, HttpGet, RateLimiter, RetryPolicy, SystemClock, UreqTransport};

const DEFAULT_STEMS: &str = include_str!("data/german_stems.txt");

pub const TRANSLATE_URL: &str = "https://translation.googleapis.com/language/translate/v2";
pub const API_KEY_ENV: &str = "GOOGLE_TRANSLATE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationRecord {
    pub source_term: String,
    pub source_word_count: u32,
    pub translated_term: String,
    pub translated_word_count: u32,
    pub has_compound: bool,
}

#[derive(Debug, Clone)]
pub struct CompoundLexicon {
    stems: HashSet<String>,
    linking_elements: Vec<String>,
    max_stem_chars: usize,
}

impl Default for CompoundLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_STEMS).expect("bundled stem lexicon is valid")
    }
}

impl CompoundLexicon {
    pub const DEFAULT_LINKING: [&'static str; 6] = ["s", "n", "es", "en", "e", ""];

    pub fn new(stems: impl IntoIterator<Item = impl AsRef<str>>) -> Result<Self> {
        Self::with_linking(stems, Self::DEFAULT_LINKING)
    }

    pub fn with_linking(
        stems: impl IntoIterator<Item = impl AsRef<str>>,
        linking: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let stems: HashSet<String> = stems
            .into_iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .collect();
        if stems.is_empty() {
            return Err(Error::InvalidArgument("stem lexicon is empty".into()));
        }
        if let Some(short) = stems.iter().find(|s| s.chars().count() < 3) {
            return Err(Error::InvalidArgument(format!(
                "stem {short:?} is shorter than 3 characters"
            )));
        }
        let max_stem_chars = stems.iter().map(|s| s.chars().count()).max().unwrap_or(0);
        Ok(CompoundLexicon {
            stems,
            linking_elements: linking.into_iter().map(Into::into).collect(),
            max_stem_chars,
        })
    }

    /// One stem per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::error::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.stems.contains(stem)
    }

    pub fn linking_elements(&self) -> &[String] {
        &self.linking_elements
    }

    /// Segments `word` (already lowercased) into stems, longest stem first.
    /// Returns the stem sequence of the first segmentation found with at
    /// least two stems.
    pub fn segment(&self, word: &str) -> Option<Vec<String>> {
        let chars: Vec<char> = word.chars().collect();
        let mut path = Vec::new();
        if self.segment_from(&chars, 0, &mut path) {
            Some(path)
        } else {
            None
        }
    }

    fn segment_from(&self, chars: &[char], start: usize, path: &mut Vec<String>) -> bool {
        let remaining = chars.len() - start;
        let longest = self.max_stem_chars.min(remaining);
        for len in (3..=longest).rev() {
            let stem: String = chars[start..start + len].iter().collect();
            if !self.stems.contains(&stem) {
                continue;
            }
            path.push(stem);
            let end = start + len;
            if end == chars.len() {
                if path.len() >= 2 {
                    return true;
                }
            } else {
                for link in &self.linking_elements {
                    let link_chars: Vec<char> = link.chars().collect();
                    if chars[end..].starts_with(&link_chars)
                        && end + link_chars.len() < chars.len()
                        && self.segment_from(chars, end + link_chars.len(), path)
                    {
                        return true;
                    }
                }
            }
            path.pop();
        }
        false
    }
}

/// True when the token splits into two or more lexicon stems, with at most
/// one linking element between adjacent stems.
pub fn detect_compound(token: &str, lexicon: &CompoundLexicon) -> bool {
    let lower = token.trim().to_lowercase();
    !lower.is_empty() && lexicon.segment(&lower).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GlmBucket {
    /// 1 to 3 English words.
    Short,
    /// 4 to 6 words.
    Medium,
    /// 7 to 20 words.
    Long,
    /// 21 to 80 words.
    VeryLong,
    /// More than 80 words; scored like `VeryLong`.
    Overlong,
}

impl GlmBucket {
    pub fn for_word_count(words: u32) -> Self {
        match words {
            0..=3 => GlmBucket::Short,
            4..=6 => GlmBucket::Medium,
            7..=20 => GlmBucket::Long,
            21..=80 => GlmBucket::VeryLong,
            _ => GlmBucket::Overlong,
        }
    }

    /// Inclusive word-count range; the upper bound of `Overlong` is open.
    pub fn range(self) -> (u32, Option<u32>) {
        match self {
            GlmBucket::Short => (1, Some(3)),
            GlmBucket::Medium => (4, Some(6)),
            GlmBucket::Long => (7, Some(20)),
            GlmBucket::VeryLong => (21, Some(80)),
            GlmBucket::Overlong => (81, None),
        }
    }
}

/// Base score in tenths, before the compound reward.
fn base_tenths(source: u32, translated: u32) -> u32 {
    // translated <= 80% of source, in integers
    let within_fifth = 5 * u64::from(translated) <= 4 * u64::from(source);
    match GlmBucket::for_word_count(source) {
        GlmBucket::Short => {
            if translated <= source {
                10
            } else if translated == source + 1 {
                8
            } else {
                5
            }
        }
        GlmBucket::Medium => {
            if translated < source {
                10
            } else if translated == source {
                8
            } else {
                5
            }
        }
        GlmBucket::Long => {
            if within_fifth {
                9
            } else if translated < source {
                7
            } else {
                4
            }
        }
        GlmBucket::VeryLong | GlmBucket::Overlong => {
            if within_fifth {
                7
            } else {
                4
            }
        }
    }
}

/// Scores from raw counts; `source` must be at least 1.
pub fn glm_score_counts(source: u32, translated: u32, has_compound: bool) -> f64 {
    let mut tenths = base_tenths(source, translated);
    if has_compound {
        tenths = (tenths + 1).min(10);
    }
    f64::from(tenths) / 10.0
}

pub fn glm_score(rec: &TranslationRecord) -> f64 {
    glm_score_counts(
        rec.source_word_count,
        rec.translated_word_count,
        rec.has_compound,
    )
}

pub trait Translator: Send + Sync {
    fn translate(&self, term: &str) -> Result<String>;
}

/// English-to-German lookups backed by an append-only `TERM<TAB>TRANSLATION`
/// file.
#[derive(Default)]
pub struct TranslationCache {
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl TranslationCache {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (term, translation) = line
                .split_once('\t')
                .ok_or_else(|| Error::record(idx + 1, "expected TERM<TAB>TRANSLATION"))?;
            if translation.trim().is_empty() {
                return Err(Error::record(idx + 1, "empty translation"));
            }
            entries.insert(term.to_owned(), translation.trim().to_owned());
        }
        Ok(TranslationCache {
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::parse(&crate::error::read_to_string(path)?)
        } else {
            Ok(Self::default())
        }
    }

    pub fn open_writable(path: &Path) -> Result<Self> {
        let cache = Self::load(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        *cache.writer.lock().unwrap_or_else(|e| e.into_inner()) = Some((path.to_owned(), file));
        Ok(cache)
    }

    pub fn get(&self, term: &str) -> Option<String> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(term)
            .cloned()
    }

    pub fn insert(&self, term: &str, translation: &str) -> Result<()> {
        if term.contains(['\t', '\n', '\r']) || translation.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "cannot cache {term:?}: contains a tab or newline"
            )));
        }
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((path, file)) = writer.as_mut() {
            writeln!(file, "{term}\t{translation}").map_err(|e| Error::io(path.clone(), e))?;
        }
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(term.to_owned(), translation.to_owned());
        Ok(())
    }
}

#[derive(Deserialize)]
struct TranslateResponse {
    data: TranslateData,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TranslateData {
    translations: Vec<TranslatedText>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TranslatedText {
    translated_text: String,
}

/// Live English-to-German client for the Cloud Translation v2 REST API.
pub struct GoogleTranslateClient {
    transport: Box<dyn HttpGet>,
    clock: Box<dyn Clock>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    api_key: String,
    base_url: String,
}

impl GoogleTranslateClient {
    pub fn new(transport: Box<dyn HttpGet>, clock: Box<dyn Clock>, api_key: String) -> Self {
        GoogleTranslateClient {
            transport,
            clock,
            limiter: RateLimiter::per_second(5.0),
            retry: RetryPolicy::default(),
            api_key,
            base_url: TRANSLATE_URL.to_owned(),
        }
    }

    /// Reads the key from `GOOGLE_TRANSLATE_API_KEY`.
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

impl Translator for GoogleTranslateClient {
    fn translate(&self, term: &str) -> Result<String> {
        let params = [
            ("q", term),
            ("source", "en"),
            ("target", "de"),
            ("format", "text"),
            ("key", self.api_key.as_str()),
        ];
        let body = net::with_retries(self.retry, self.clock.as_ref(), || {
            self.limiter.acquire(self.clock.as_ref());
            self.transport.get(&self.base_url, &params)
        })?;
        let parsed: TranslateResponse = serde_json::from_str(&body)?;
        parsed
            .data
            .translations
            .into_iter()
            .next()
            .map(|t| t.translated_text.trim().to_owned())
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("empty translation for {term:?}")))
    }
}

/// Cache-first translator; without a live client every miss is an error.
pub struct CachedTranslator {
    cache: TranslationCache,
    live: Option<Box<dyn Translator>>,
}

impl CachedTranslator {
    pub fn offline(cache: TranslationCache) -> Self {
        CachedTranslator { cache, live: None }
    }

    pub fn online(cache: TranslationCache, live: Box<dyn Translator>) -> Self {
        CachedTranslator {
            cache,
            live: Some(live),
        }
    }
}

impl Translator for CachedTranslator {
    fn translate(&self, term: &str) -> Result<String> {
        if let Some(t) = self.cache.get(term) {
            return Ok(t);
        }
        let Some(live) = &self.live else {
            return Err(Error::CacheMiss(term.to_owned()));
        };
        let t = live.translate(term)?;
        self.cache.insert(term, &t)?;
        Ok(t)
    }
}

pub fn translate(
    term: &str,
    translator: &dyn Translator,
    lexicon: &CompoundLexicon,
) -> Result<TranslationRecord> {
    let source = brevity::tokenize(term)?;
    let translated_term = translator.translate(term)?;
    let target = brevity::tokenize(&translated_term)?;
    let has_compound = target.tokens().iter().any(|t| detect_compound(t, lexicon));
    Ok(TranslationRecord {
        source_term: term.to_owned(),
        source_word_count: source.count(),
        translated_term,
        translated_word_count: target.count(),
        has_compound,
    })
}
