//! Run configuration: a `key = value` file, overridable from the command
//! line. API keys come from the environment only.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{read_to_string, Error, Result};
use crate::reliability::MeasurementLevel;
use crate::scoring::{BucketMode, Weights};
use crate::survey::{BucketScope, DEFAULT_POOL_SIZE};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Raw concept table (ingest input).
    pub concepts: Option<PathBuf>,
    /// Filtered concept table (ingest output, score input).
    pub filtered: Option<PathBuf>,
    /// Replaces the bundled excluded semantic types.
    pub excluded_types: Option<PathBuf>,
    /// Keep only concepts in this language; all languages when unset.
    pub language: Option<String>,
    pub frequency_cache: Option<PathBuf>,
    pub translation_cache: Option<PathBuf>,
    /// Replaces the bundled German stem list.
    pub compound_lexicon: Option<PathBuf>,
    /// Medical dictionary headwords, one per line.
    pub dictionary: Option<PathBuf>,
    /// Extra `WORD<TAB>TAG` entries for the rule tagger.
    pub tag_lexicon: Option<PathBuf>,
    /// `TERM<TAB>TAGS` overrides.
    pub pretagged: Option<PathBuf>,
    /// Scored corpus (score output, input to everything after).
    pub scored: Option<PathBuf>,
    pub weights: Weights,
    pub bucket_mode: BucketMode,
    pub bucket_scope: BucketScope,
    pub level: MeasurementLevel,
    pub max_word_count: Option<u32>,
    pub max_count: Option<u64>,
    pub offline: bool,
    pub seed: u64,
    pub pool_size: usize,
    pub port: u16,
    pub state_dir: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            concepts: None,
            filtered: None,
            excluded_types: None,
            language: None,
            frequency_cache: None,
            translation_cache: None,
            compound_lexicon: None,
            dictionary: None,
            tag_lexicon: None,
            pretagged: None,
            scored: None,
            weights: Weights::default(),
            bucket_mode: BucketMode::default(),
            bucket_scope: BucketScope::default(),
            level: MeasurementLevel::default(),
            max_word_count: None,
            max_count: None,
            offline: false,
            seed: 0,
            pool_size: DEFAULT_POOL_SIZE,
            port: DEFAULT_PORT,
            state_dir: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::record(line, format!("bad value {value:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::record(line, format!("bad boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment line. Relative paths
    /// resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::record(line_no, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let path = || Some(base.join(value));
            match key {
                "concepts" => cfg.concepts = path(),
                "filtered" => cfg.filtered = path(),
                "excluded_types" => cfg.excluded_types = path(),
                "language" => cfg.language = Some(value.to_owned()),
                "frequency_cache" => cfg.frequency_cache = path(),
                "translation_cache" => cfg.translation_cache = path(),
                "compound_lexicon" => cfg.compound_lexicon = path(),
                "dictionary" => cfg.dictionary = path(),
                "tag_lexicon" => cfg.tag_lexicon = path(),
                "pretagged" => cfg.pretagged = path(),
                "scored" => cfg.scored = path(),
                "state_dir" => cfg.state_dir = path(),
                "weights" => {
                    cfg.weights = value
                        .parse()
                        .map_err(|e: Error| Error::record(line_no, e.to_string()))?
                }
                "bucket_mode" => {
                    cfg.bucket_mode = value
                        .parse()
                        .map_err(|e: Error| Error::record(line_no, e.to_string()))?
                }
                "bucket_scope" => {
                    cfg.bucket_scope = value
                        .parse()
                        .map_err(|e: Error| Error::record(line_no, e.to_string()))?
                }
                "level" => {
                    cfg.level = value
                        .parse()
                        .map_err(|e: Error| Error::record(line_no, e.to_string()))?
                }
                "max_word_count" => cfg.max_word_count = Some(parse_value(line_no, key, value)?),
                "max_count" => cfg.max_count = Some(parse_value(line_no, key, value)?),
                "offline" => cfg.offline = parse_bool(line_no, key, value)?,
                "seed" => cfg.seed = parse_value(line_no, key, value)?,
                "pool_size" => cfg.pool_size = parse_value(line_no, key, value)?,
                "port" => cfg.port = parse_value(line_no, key, value)?,
                "max_in_flight" => cfg.max_in_flight = parse_value(line_no, key, value)?,
                other => return Err(Error::record(line_no, format!("unknown key {other:?}"))),
            }
        }
        if cfg.max_in_flight == 0 {
            return Err(Error::InvalidArgument("max_in_flight must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.weights.values(), [22, 27, 31, 15]);
        assert_eq!(c.pool_size, 100);
        assert!(!c.offline);
    }

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = "# run\nconcepts = data/c.tsv\nweights = 49,19,10,20\noffline = true\nseed = 7\nbucket_mode = fixed:0.3,0.6\nlevel = ordinal\n";
        let c = RunConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.concepts.as_deref(), Some(Path::new("/base/data/c.tsv")));
        assert_eq!(c.weights, Weights::FIRST_FIT);
        assert!(c.offline);
        assert_eq!(c.seed, 7);
        assert_eq!(c.level, MeasurementLevel::Ordinal);
        assert_eq!(c.bucket_mode.to_string(), "fixed:0.3,0.6");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            RunConfig::parse("colour = red\n", Path::new(".")),
            Err(Error::Record { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("\nseed\n", Path::new(".")),
            Err(Error::Record { line: 2, .. })
        ));
        assert!(RunConfig::parse("weights = 0,0,0,0\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("offline = maybe\n", Path::new(".")).is_err());
    }
}
