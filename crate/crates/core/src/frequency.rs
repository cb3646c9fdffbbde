//! PubMed occurrence counts and the frequency factor.
//!
//! Counts come from a [`CountProvider`]: either the file-backed cache alone
//! (offline) or the cache in front of the live E-utilities `esearch` client.
//! Cache files hold `TERM<TAB>COUNT` lines and are appended to as live
//! lookups complete.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::net::{self, Clock, HttpGet, RateLimiter, RetryPolicy, SystemClock, UreqTransport};

pub const ESEARCH_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi";
pub const API_KEY_ENV: &str = "NCBI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencySource {
    Live,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyRecord {
    pub term: String,
    pub count: u64,
    pub source: FrequencySource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimitPolicy {
    pub max_requests_per_second: f64,
    pub api_key_present: bool,
}

impl RateLimitPolicy {
    /// NCBI allows 3 requests/s anonymously and 10 requests/s with a key.
    pub fn for_key(api_key_present: bool) -> Self {
        RateLimitPolicy {
            max_requests_per_second: if api_key_present { 10.0 } else { 3.0 },
            api_key_present,
        }
    }
}

/// Which PubMed fields a count is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryField {
    #[default]
    AllFields,
    TitleAbstract,
    Mesh,
}

impl QueryField {
    /// The phrase query sent as the `term` parameter.
    pub fn query(self, term: &str) -> String {
        let phrase = term.replace('"', "");
        match self {
            QueryField::AllFields => format!("\"{phrase}\"[All Fields]"),
            QueryField::TitleAbstract => format!("\"{phrase}\"[tiab]"),
            QueryField::Mesh => format!("\"{phrase}\"[mh]"),
        }
    }
}

impl std::str::FromStr for QueryField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-fields" => Ok(QueryField::AllFields),
            "tiab" | "title-abstract" => Ok(QueryField::TitleAbstract),
            "mesh" => Ok(QueryField::Mesh),
            other => Err(Error::InvalidArgument(format!("unknown query field {other:?}"))),
        }
    }
}

pub trait CountProvider: Send + Sync {
    fn fetch_count(&self, term: &str) -> Result<FrequencyRecord>;
}

/// Term-to-count store backed by an append-only file.
#[derive(Default)]
pub struct CountCache {
    entries: RwLock<HashMap<String, u64>>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl CountCache {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (term, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::record(idx + 1, "expected TERM<TAB>COUNT"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::record(idx + 1, format!("invalid count {count:?}")))?;
            entries.insert(term.to_owned(), count);
        }
        Ok(CountCache {
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = if path.exists() {
            crate::error::read_to_string(path)?
        } else {
            String::new()
        };
        Self::parse(&text)
    }

    /// Loads `path` (if present) and appends future inserts to it.
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

    pub fn get(&self, term: &str) -> Option<u64> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(term)
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, term: &str, count: u64) -> Result<()> {
        if term.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "term {term:?} cannot be cached: contains a tab or newline"
            )));
        }
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((path, file)) = writer.as_mut() {
            writeln!(file, "{term}\t{count}").map_err(|e| Error::io(path.clone(), e))?;
        }
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(term.to_owned(), count);
        Ok(())
    }
}

#[derive(Deserialize)]
struct EsearchResponse {
    esearchresult: EsearchResult,
}

#[derive(Deserialize)]
struct EsearchResult {
    count: String,
}

pub struct EutilsClient {
    transport: Box<dyn HttpGet>,
    clock: Box<dyn Clock>,
    limiter: RateLimiter,
    policy: RateLimitPolicy,
    retry: RetryPolicy,
    api_key: Option<String>,
    base_url: String,
    field: QueryField,
}

impl EutilsClient {
    pub fn new(transport: Box<dyn HttpGet>, clock: Box<dyn Clock>, api_key: Option<String>) -> Self {
        let policy = RateLimitPolicy::for_key(api_key.is_some());
        EutilsClient {
            transport,
            clock,
            limiter: RateLimiter::per_second(policy.max_requests_per_second),
            policy,
            retry: RetryPolicy::default(),
            api_key,
            base_url: ESEARCH_URL.to_owned(),
            field: QueryField::default(),
        }
    }

    /// Live client over HTTPS, reading the API key from `NCBI_API_KEY`.
    pub fn from_env() -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(
            Box::new(UreqTransport::default()),
            Box::new(SystemClock::default()),
            key,
        )
    }

    pub fn with_field(mut self, field: QueryField) -> Self {
        self.field = field;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    pub fn rate_limit(&self) -> RateLimitPolicy {
        self.policy
    }

    pub fn esearch_count(&self, term: &str) -> Result<u64> {
        let query = self.field.query(term);
        let mut params = vec![
            ("db", "pubmed"),
            ("term", query.as_str()),
            ("retmode", "json"),
            ("retmax", "0"),
        ];
        if let Some(key) = &self.api_key {
            params.push(("api_key", key.as_str()));
        }
        let body = net::with_retries(self.retry, self.clock.as_ref(), || {
            self.limiter.acquire(self.clock.as_ref());
            self.transport.get(&self.base_url, &params)
        })?;
        parse_esearch_count(&body)
    }
}

pub fn parse_esearch_count(body: &str) -> Result<u64> {
    let parsed: EsearchResponse = serde_json::from_str(body)?;
    parsed
        .esearchresult
        .count
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad esearch count {:?}", parsed.esearchresult.count)))
}

/// Cache-first provider. Without a live client every miss is an error.
pub struct CachedCounts {
    cache: CountCache,
    live: Option<EutilsClient>,
}

impl CachedCounts {
    pub fn offline(cache: CountCache) -> Self {
        CachedCounts { cache, live: None }
    }

    pub fn online(cache: CountCache, client: EutilsClient) -> Self {
        CachedCounts {
            cache,
            live: Some(client),
        }
    }

    pub fn cache(&self) -> &CountCache {
        &self.cache
    }
}

impl CountProvider for CachedCounts {
    fn fetch_count(&self, term: &str) -> Result<FrequencyRecord> {
        if term.trim().is_empty() {
            return Err(Error::EmptyTerm);
        }
        if let Some(count) = self.cache.get(term) {
            return Ok(FrequencyRecord {
                term: term.to_owned(),
                count,
                source: FrequencySource::Cache,
            });
        }
        let Some(client) = &self.live else {
            return Err(Error::CacheMiss(term.to_owned()));
        };
        let count = client.esearch_count(term)?;
        self.cache.insert(term, count)?;
        Ok(FrequencyRecord {
            term: term.to_owned(),
            count,
            source: FrequencySource::Live,
        })
    }
}

/// Fetches counts for many terms with at most `max_in_flight` concurrent
/// lookups. Results are in input order.
pub fn fetch_counts(
    terms: &[String],
    provider: &dyn CountProvider,
    max_in_flight: usize,
) -> Vec<Result<FrequencyRecord>> {
    net::bounded_map(terms, max_in_flight, |t| provider.fetch_count(t))
}

/// Log-scaled frequency factor: `ln(1 + count) / ln(1 + max_count)`.
pub fn frequency_score(count: u64, max_count: u64) -> Result<f64> {
    if max_count == 0 {
        if count > 0 {
            return Err(Error::InvalidArgument(format!(
                "count {count} exceeds max count 0"
            )));
        }
        return Ok(0.0);
    }
    if count > max_count {
        return Err(Error::InvalidArgument(format!(
            "count {count} exceeds max count {max_count}"
        )));
    }
    Ok((count as f64).ln_1p() / (max_count as f64).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::testing::FakeClock;
    use crate::net::TransportError;
    use proptest::prelude::*;
    use std::sync::Arc;
    use std::time::Duration;

    #[derive(Clone, Default)]
    struct MockTransport {
        inner: Arc<MockInner>,
    }

    type Call = (Duration, Vec<(String, String)>);

    #[derive(Default)]
    struct MockInner {
        clock: FakeClock,
        calls: Mutex<Vec<Call>>,
        counts: HashMap<String, u64>,
        failures_left: Mutex<u32>,
    }

    impl HttpGet for MockTransport {
        fn get(&self, _url: &str, query: &[(&str, &str)]) -> Result<String, TransportError> {
            let params: Vec<(String, String)> =
                query.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
            self.inner
                .calls
                .lock()
                .unwrap()
                .push((self.inner.clock.now(), params.clone()));
            let mut fails = self.inner.failures_left.lock().unwrap();
            if *fails > 0 {
                *fails -= 1;
                return Err(TransportError {
                    retryable: true,
                    message: "503".into(),
                });
            }
            let term = &params.iter().find(|(k, _)| k == "term").unwrap().1;
            let count = self
                .inner
                .counts
                .iter()
                .find(|(t, _)| term.contains(t.as_str()))
                .map(|(_, c)| *c)
                .unwrap_or(0);
            Ok(format!(
                r#"{{"header":{{"type":"esearch"}},"esearchresult":{{"count":"{count}","retmax":"0","idlist":[]}}}}"#
            ))
        }
    }

    struct SharedClock(Arc<MockInner>);

    impl Clock for SharedClock {
        fn now(&self) -> Duration {
            self.0.clock.now()
        }
        fn sleep(&self, d: Duration) {
            self.0.clock.sleep(d)
        }
    }

    fn client(mock: &MockTransport, key: Option<&str>) -> EutilsClient {
        EutilsClient::new(
            Box::new(mock.clone()),
            Box::new(SharedClock(mock.inner.clone())),
            key.map(str::to_owned),
        )
    }

    fn mock_with(counts: &[(&str, u64)]) -> MockTransport {
        MockTransport {
            inner: Arc::new(MockInner {
                counts: counts.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
                ..Default::default()
            }),
        }
    }

    #[test]
    fn cache_hit_passes_through() {
        let cache = CountCache::parse("heart disease\t1500\n").unwrap();
        let provider = CachedCounts::offline(cache);
        let rec = provider.fetch_count("heart disease").unwrap();
        assert_eq!(rec.count, 1500);
        assert_eq!(rec.source, FrequencySource::Cache);
    }

    #[test]
    fn offline_miss_is_an_error_not_zero() {
        let provider = CachedCounts::offline(CountCache::default());
        assert!(matches!(
            provider.fetch_count("heart disease"),
            Err(Error::CacheMiss(_))
        ));
    }

    #[test]
    fn live_nonsense_term_counts_zero_and_is_written_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("freq.tsv");
        let mock = mock_with(&[]);
        let provider = CachedCounts::online(CountCache::open_writable(&path).unwrap(), client(&mock, None));
        let rec = provider.fetch_count("xqzzyv blorft").unwrap();
        assert_eq!(rec.count, 0);
        assert_eq!(rec.source, FrequencySource::Live);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "xqzzyv blorft\t0\n");

        // Second lookup is served from cache without touching the transport.
        let again = provider.fetch_count("xqzzyv blorft").unwrap();
        assert_eq!(again.source, FrequencySource::Cache);
        assert_eq!(mock.inner.calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn request_parameters() {
        let mock = mock_with(&[("heart attack", 42)]);
        let c = client(&mock, Some("secret"));
        assert_eq!(c.esearch_count("heart attack").unwrap(), 42);
        let calls = mock.inner.calls.lock().unwrap();
        let params = &calls[0].1;
        let get = |k: &str| params.iter().find(|(p, _)| p == k).map(|(_, v)| v.as_str());
        assert_eq!(get("db"), Some("pubmed"));
        assert_eq!(get("term"), Some("\"heart attack\"[All Fields]"));
        assert_eq!(get("api_key"), Some("secret"));
    }

    #[test]
    fn rate_policy_defaults() {
        assert_eq!(RateLimitPolicy::for_key(false).max_requests_per_second, 3.0);
        assert_eq!(RateLimitPolicy::for_key(true).max_requests_per_second, 10.0);
        let mock = mock_with(&[]);
        assert!((client(&mock, None).rate_limit().max_requests_per_second - 3.0).abs() < 1e-9);
    }

    fn assert_rate(calls: &[(Duration, Vec<(String, String)>)], per_second: f64) {
        let min_gap = Duration::from_secs_f64(1.0 / per_second);
        let mut stamps: Vec<Duration> = calls.iter().map(|c| c.0).collect();
        stamps.sort();
        for w in stamps.windows(2) {
            assert!(w[1] - w[0] + Duration::from_nanos(1) >= min_gap, "{:?}", w);
        }
    }

    #[test]
    fn concurrent_fetches_respect_rate_limit() {
        for (key, rate) in [(None, 3.0), (Some("k"), 10.0)] {
            let mock = mock_with(&[("term", 5)]);
            let provider = CachedCounts::online(CountCache::default(), client(&mock, key));
            let terms: Vec<String> = (0..25).map(|i| format!("term {i}")).collect();
            let results = fetch_counts(&terms, &provider, 6);
            assert!(results.iter().all(|r| r.as_ref().unwrap().count == 5));
            let calls = mock.inner.calls.lock().unwrap();
            assert_eq!(calls.len(), 25);
            assert_rate(&calls, rate);
        }
    }

    #[test]
    fn transient_failures_are_retried_within_the_rate() {
        let mock = mock_with(&[("x", 9)]);
        *mock.inner.failures_left.lock().unwrap() = 2;
        let c = client(&mock, None);
        assert_eq!(c.esearch_count("x").unwrap(), 9);
        let calls = mock.inner.calls.lock().unwrap();
        assert_eq!(calls.len(), 3);
        assert_rate(&calls, 3.0);
    }

    #[test]
    fn persistent_failure_is_retryable_error() {
        let mock = mock_with(&[]);
        *mock.inner.failures_left.lock().unwrap() = 100;
        let err = client(&mock, None).esearch_count("x").unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn score_examples() {
        assert_eq!(frequency_score(0, 10).unwrap(), 0.0);
        assert_eq!(frequency_score(777, 777).unwrap(), 1.0);
        assert!((frequency_score(99, 9999).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(frequency_score(0, 0).unwrap(), 0.0);
        assert!(frequency_score(11, 10).is_err());
    }

    #[test]
    fn cache_file_parsing() {
        let c = CountCache::parse("a b\t3\r\n\nc\t0\na b\t4\n").unwrap();
        assert_eq!(c.get("a b"), Some(4));
        assert_eq!(c.get("c"), Some(0));
        assert!(matches!(CountCache::parse("x\tmany\n"), Err(Error::Record { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn score_is_order_preserving(a in 0u64..1_000_000, b in 0u64..1_000_000, extra in 0u64..1000) {
            let max = a.max(b) + extra;
            let (lo, hi) = (a.min(b), a.max(b));
            let (s_lo, s_hi) = (frequency_score(lo, max).unwrap(), frequency_score(hi, max).unwrap());
            prop_assert!(s_lo <= s_hi);
            prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
        }
    }
}
