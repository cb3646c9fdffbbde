//! Command-line entry points. Each `cmd_*` function is the single code path
//! shared with the HTTP service.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{read_to_string, Error, Result};
use crate::frequency::{CachedCounts, CountCache, CountProvider, EutilsClient};
use crate::german::{CachedTranslator, CompoundLexicon, GoogleTranslateClient, TranslationCache, Translator};
use crate::ingest::{self, CorpusStats, SemanticTypeFilter};
use crate::lexical::{DictionaryIndex, DictionaryLookup, MedicalDictionaryClient, PatternScoreTable, PretaggedTagger, RuleTagger, Tagger};
use crate::optimize::{self, OptimizationTrace, Strategy};
use crate::reliability::{krippendorff_alpha, metric_agreement, RatingMatrix};
use crate::scoring::{self, parse_scored, rescore, BucketMode, FactorProviders, ScoredConcept, Weights};
use crate::survey::{self, AgreementSettings, BucketScope, IterationReport, SurveySample};

#[derive(Debug, Parser)]
#[command(name = "goodness", version, about = "Score candidate medical concepts and fit the score weights to expert ratings")]
pub struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Forbid every network call; all lookups must hit the caches.
    #[arg(long, global = true)]
    pub offline: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Factor weights `BR,FO,GLM,DP`.
    #[arg(long, global = true)]
    pub weights: Option<Weights>,
    /// `quantile` or `fixed:LOWER,UPPER`.
    #[arg(long, global = true)]
    pub bucket_mode: Option<BucketMode>,
    /// `corpus` or `rated`.
    #[arg(long, global = true)]
    pub bucket_scope: Option<BucketScope>,
    /// `nominal` or `ordinal`.
    #[arg(long, global = true)]
    pub level: Option<crate::reliability::MeasurementLevel>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a raw concept table by semantic type and language.
    Ingest(IngestArgs),
    /// Compute factor and goodness scores for a filtered concept table.
    Score(ScoreArgs),
    /// Fit weights to one rater's ratings.
    Optimize(OptimizeArgs),
    /// Draw a survey sample from a scored corpus.
    Sample(SampleArgs),
    /// Krippendorff's alpha among raters, and against the metric.
    Agree(AgreeArgs),
    /// Agreement and histogram report for one iteration.
    Report(ReportArgs),
    /// Serve the survey API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub excluded_types: Option<PathBuf>,
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub frequency_cache: Option<PathBuf>,
    #[arg(long)]
    pub translation_cache: Option<PathBuf>,
    #[arg(long)]
    pub compound_lexicon: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub tag_lexicon: Option<PathBuf>,
    #[arg(long)]
    pub pretagged: Option<PathBuf>,
    #[arg(long)]
    pub max_word_count: Option<u32>,
    #[arg(long)]
    pub max_count: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub ratings: PathBuf,
    /// Reference rater; defaults to the rater with the most ratings.
    #[arg(long)]
    pub rater: Option<String>,
    #[arg(long, default_value = "smbo")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = optimize::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = optimize::DEFAULT_GRID_STEP)]
    pub step: u32,
    #[arg(long, default_value_t = optimize::DEFAULT_INIT_POINTS)]
    pub init_points: usize,
    /// Where to write the optimization trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub scored: Option<PathBuf>,
    /// Sample state (JSON, includes pool tags).
    #[arg(long)]
    pub out: PathBuf,
    /// Rater-facing `CUI<TAB>TERM` list.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub iteration: u32,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Also compare the raters with the metric on this scored corpus.
    #[arg(long)]
    pub scored: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("no {what} given (flag or config key)")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub retained: usize,
    pub rejected: usize,
    pub stats: Option<CorpusStats>,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestOutcome> {
    let input = required(&cfg.concepts, "concept input")?;
    let out = required(&cfg.filtered, "filtered output")?;
    let concepts = ingest::parse_concepts(&read_to_string(input)?)?;
    if concepts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let filter = match &cfg.excluded_types {
        Some(p) => SemanticTypeFilter::parse(&read_to_string(p)?),
        None => SemanticTypeFilter::default(),
    };
    let total = concepts.len();
    let concepts = match &cfg.language {
        Some(lang) => ingest::filter_language(concepts, lang),
        None => concepts,
    };
    let (retained, _) = ingest::partition_semantic_types(concepts, &filter);
    write_file(out, &ingest::format_concepts(&retained))?;
    let stats = if retained.is_empty() {
        log::warn!("every concept was filtered out");
        None
    } else {
        Some(ingest::corpus_stats(&retained)?)
    };
    Ok(IngestOutcome {
        retained: retained.len(),
        rejected: total - retained.len(),
        stats,
    })
}

/// Cache-backed factor sources; live clients only when online.
pub struct Providers {
    counts: Box<dyn CountProvider>,
    translator: Box<dyn Translator>,
    lexicon: CompoundLexicon,
    dictionary: Box<dyn DictionaryLookup>,
    tagger: Box<dyn Tagger>,
    patterns: PatternScoreTable,
}

impl Providers {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let counts: Box<dyn CountProvider> = match (&cfg.frequency_cache, cfg.offline) {
            (Some(p), true) => Box::new(CachedCounts::offline(CountCache::load(p)?)),
            (None, true) => return Err(Error::InvalidArgument("offline scoring needs a frequency cache".into())),
            (Some(p), false) => Box::new(CachedCounts::online(CountCache::open_writable(p)?, EutilsClient::from_env())),
            (None, false) => Box::new(CachedCounts::online(CountCache::default(), EutilsClient::from_env())),
        };

        let translations = match (&cfg.translation_cache, cfg.offline) {
            (Some(p), true) => TranslationCache::load(p)?,
            (Some(p), false) => TranslationCache::open_writable(p)?,
            (None, true) => {
                return Err(Error::InvalidArgument("offline scoring needs a translation cache".into()))
            }
            (None, false) => TranslationCache::default(),
        };
        let translator: Box<dyn Translator> = if cfg.offline {
            Box::new(CachedTranslator::offline(translations))
        } else {
            match GoogleTranslateClient::from_env() {
                Ok(live) => Box::new(CachedTranslator::online(translations, Box::new(live))),
                Err(e) => {
                    log::warn!("live translation unavailable ({e}); using the cache only");
                    Box::new(CachedTranslator::offline(translations))
                }
            }
        };

        let dictionary: Box<dyn DictionaryLookup> = match (&cfg.dictionary, cfg.offline) {
            (Some(p), _) => Box::new(DictionaryIndex::load(p)?),
            (None, true) => return Err(Error::InvalidArgument("offline scoring needs a dictionary file".into())),
            (None, false) => Box::new(MedicalDictionaryClient::from_env()?),
        };

        let lexicon = match &cfg.compound_lexicon {
            Some(p) => CompoundLexicon::load(p)?,
            None => CompoundLexicon::default(),
        };
        let mut rules = RuleTagger::default();
        if let Some(p) = &cfg.tag_lexicon {
            rules.extend_from(&read_to_string(p)?)?;
        }
        let tagger: Box<dyn Tagger> = match &cfg.pretagged {
            Some(p) => Box::new(PretaggedTagger::parse(&read_to_string(p)?, rules)?),
            None => Box::new(rules),
        };
        Ok(Providers {
            counts,
            translator,
            lexicon,
            dictionary,
            tagger,
            patterns: PatternScoreTable::default(),
        })
    }

    pub fn factor_providers(&self, cfg: &RunConfig) -> FactorProviders<'_> {
        FactorProviders {
            counts: self.counts.as_ref(),
            translator: self.translator.as_ref(),
            lexicon: &self.lexicon,
            dictionary: self.dictionary.as_ref(),
            tagger: self.tagger.as_ref(),
            patterns: &self.patterns,
            max_word_count: cfg.max_word_count,
            max_count: cfg.max_count,
            max_in_flight: cfg.max_in_flight,
        }
    }
}

/// Scores the filtered corpus and returns the rendered scored file.
pub fn cmd_score(cfg: &RunConfig) -> Result<String> {
    let input = required(&cfg.filtered, "concept table to score")?;
    let concepts = ingest::parse_concepts(&read_to_string(input)?)?;
    if concepts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let providers = Providers::from_config(cfg)?;
    let scored = scoring::score_corpus(&concepts, &providers.factor_providers(cfg), cfg.weights)?;
    let buckets = scoring::bucketize(&scored, cfg.bucket_mode)?;
    let text = scoring::format_scored(&scored, &buckets);
    if let Some(out) = &cfg.scored {
        write_file(out, &text)?;
    }
    Ok(text)
}

/// Reads a scored corpus and re-derives its scores under `weights`.
pub fn load_scored(path: &Path, weights: Weights) -> Result<Vec<ScoredConcept>> {
    let mut scored: Vec<ScoredConcept> = parse_scored(&read_to_string(path)?)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    rescore(&mut scored, weights);
    Ok(scored)
}

pub fn load_ratings(path: &Path, known: Option<&HashSet<String>>) -> Result<RatingMatrix> {
    let ingest = survey::ingest_ratings(&read_to_string(path)?, known)?;
    Ok(ingest.matrix)
}

fn agreement(cfg: &RunConfig) -> AgreementSettings {
    AgreementSettings {
        mode: cfg.bucket_mode,
        scope: cfg.bucket_scope,
        level: cfg.level,
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub reference_rater: String,
    pub trace: OptimizationTrace,
}

pub fn cmd_optimize(cfg: &RunConfig, args: &OptimizeArgs) -> Result<OptimizeOutcome> {
    let scored = load_scored(required(&cfg.scored, "scored corpus")?, cfg.weights)?;
    let known: HashSet<String> = scored.iter().map(|s| s.cui.clone()).collect();
    let ratings = load_ratings(&args.ratings, Some(&known))?;
    let reference = match &args.rater {
        Some(r) => r.clone(),
        None => survey::default_reference_rater(&ratings)
            .ok_or_else(|| Error::InvalidArgument("the ratings file holds no ratings".into()))?,
    };
    if !ratings.raters().contains(&reference) {
        return Err(Error::InvalidArgument(format!("unknown rater {reference:?}")));
    }
    let spec = survey::objective_spec(&scored, &ratings.select_raters(&[&reference]), &agreement(cfg))?;
    let trace = optimize::optimize(&spec, args.strategy, args.budget, cfg.seed, args.step, args.init_points)?;
    if let Some(path) = &args.trace {
        write_file(path, &trace.to_text())?;
    }
    Ok(OptimizeOutcome {
        reference_rater: reference,
        trace,
    })
}

pub fn cmd_sample(cfg: &RunConfig, args: &SampleArgs) -> Result<SurveySample> {
    let scored = load_scored(required(&cfg.scored, "scored corpus")?, cfg.weights)?;
    let sample = survey::sample_survey(&scored, cfg.pool_size, cfg.seed, args.iteration, cfg.weights)?;
    write_file(&args.out, &sample.to_json()?)?;
    if let Some(export) = &args.export {
        write_file(export, &sample.export())?;
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreeOutcome {
    pub raters: Option<crate::reliability::ReliabilityResult>,
    pub with_metric: Option<crate::reliability::ReliabilityResult>,
}

pub fn cmd_agree(cfg: &RunConfig, args: &AgreeArgs) -> Result<AgreeOutcome> {
    let ratings = load_ratings(&args.ratings, None)?;
    let raters = if ratings.raters().len() >= 2 {
        Some(krippendorff_alpha(&ratings, cfg.level)?)
    } else {
        None
    };
    let with_metric = match &args.scored {
        Some(path) => {
            let scored = load_scored(path, cfg.weights)?;
            let metric = survey::metric_buckets(&scored, &ratings, &agreement(cfg))?;
            Some(metric_agreement(&metric, &ratings, cfg.level)?)
        }
        None => None,
    };
    if raters.is_none() && with_metric.is_none() {
        return Err(Error::Degenerate(
            "one rater and no scored corpus: nothing to compare".into(),
        ));
    }
    Ok(AgreeOutcome { raters, with_metric })
}

pub fn cmd_report(cfg: &RunConfig, args: &ReportArgs) -> Result<IterationReport> {
    let sample = SurveySample::from_json(&read_to_string(&args.sample)?)?;
    let scored_path = args.scored.as_deref().map_or_else(|| required(&cfg.scored, "scored corpus"), Ok)?;
    let scored = load_scored(scored_path, sample.weights)?;
    let known: HashSet<String> = sample.cuis().map(str::to_owned).collect();
    let ratings = load_ratings(&args.ratings, Some(&known))?;
    survey::iteration_report(&sample, &ratings, &scored, &agreement(cfg))
}

fn apply_globals(cli: &Cli, cfg: &mut RunConfig) {
    cfg.offline |= cli.offline;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.weights {
        cfg.weights = w;
    }
    if let Some(m) = cli.bucket_mode {
        cfg.bucket_mode = m;
    }
    if let Some(s) = cli.bucket_scope {
        cfg.bucket_scope = s;
    }
    if let Some(l) = cli.level {
        cfg.level = l;
    }
}

fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn fmt_result(r: &crate::reliability::ReliabilityResult) -> String {
    format!(
        "{:.6} ({:.2}%) over {} items, {} raters, {}",
        r.alpha,
        r.percent(),
        r.n_items,
        r.n_raters,
        r.level_of_measurement
    )
}

/// Runs one parsed command line, printing results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_globals(&cli, &mut cfg);
    match &cli.command {
        Command::Ingest(a) => {
            set(&mut cfg.concepts, &a.input);
            set(&mut cfg.filtered, &a.out);
            set(&mut cfg.excluded_types, &a.excluded_types);
            set(&mut cfg.language, &a.language);
            let out = cmd_ingest(&cfg)?;
            println!("retained\t{}", out.retained);
            println!("rejected\t{}", out.rejected);
            if let Some(s) = out.stats {
                println!("max_word_count\t{}", s.max_word_count);
            }
        }
        Command::Score(a) => {
            set(&mut cfg.filtered, &a.concepts);
            set(&mut cfg.scored, &a.out);
            set(&mut cfg.frequency_cache, &a.frequency_cache);
            set(&mut cfg.translation_cache, &a.translation_cache);
            set(&mut cfg.compound_lexicon, &a.compound_lexicon);
            set(&mut cfg.dictionary, &a.dictionary);
            set(&mut cfg.tag_lexicon, &a.tag_lexicon);
            set(&mut cfg.pretagged, &a.pretagged);
            set(&mut cfg.max_word_count, &a.max_word_count);
            set(&mut cfg.max_count, &a.max_count);
            let text = cmd_score(&cfg)?;
            if cfg.scored.is_none() {
                print!("{text}");
            }
        }
        Command::Optimize(a) => {
            set(&mut cfg.scored, &a.scored);
            let out = cmd_optimize(&cfg, a)?;
            let t = &out.trace;
            println!("strategy\t{}", t.strategy);
            println!("reference_rater\t{}", out.reference_rater);
            println!("evaluations\t{}", t.evaluations.len());
            println!("best_weights\t{}", t.best_weights);
            println!("best_value\t{:.6}", t.best_value);
            if t.strategy == Strategy::Grid {
                println!("near_optimal\t{}", t.near_optimal(optimize::NEAR_OPTIMAL_EPSILON).len());
            }
        }
        Command::Sample(a) => {
            set(&mut cfg.scored, &a.scored);
            if let Some(p) = a.pool_size {
                cfg.pool_size = p;
            }
            let s = cmd_sample(&cfg, a)?;
            println!("iteration\t{}", s.iteration);
            println!("items\t{}", s.items.len());
            println!("weights\t{}", s.weights);
        }
        Command::Agree(a) => {
            let out = cmd_agree(&cfg, a)?;
            if let Some(r) = &out.raters {
                println!("alpha.raters\t{}", fmt_result(r));
            }
            if let Some(r) = &out.with_metric {
                println!("alpha.with_metric\t{}", fmt_result(r));
            }
        }
        Command::Report(a) => {
            let report = cmd_report(&cfg, a)?;
            let text = if a.json { report.to_json()? + "\n" } else { report.to_text() };
            match &a.out {
                Some(p) => write_file(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Serve(a) => {
            set(&mut cfg.scored, &a.scored);
            set(&mut cfg.state_dir, &a.state_dir);
            if let Some(p) = a.port {
                cfg.port = p;
            }
            let state = crate::service::AppState::open(&cfg)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime.block_on(crate::service::serve(state, cfg.port))?;
        }
    }
    Ok(())
}
