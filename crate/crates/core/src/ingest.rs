//! Concept table parsing, semantic-type and language filtering, and corpus
//! statistics.
//!
//! Concept files are UTF-8, one record per line:
//! `CUI<TAB>TERM<TAB>LANG<TAB>TYPE1|TYPE2|...`. Extra columns are ignored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::brevity;
use crate::error::{Error, Result};

const DEFAULT_EXCLUDED: &str = include_str!("data/excluded_semantic_types.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub cui: String,
    pub term: String,
    pub language: String,
    pub semantic_types: BTreeSet<String>,
    pub word_count: u32,
}

impl Concept {
    /// Builds a concept, deriving `word_count` from the term.
    pub fn new(
        cui: impl Into<String>,
        term: impl Into<String>,
        language: impl Into<String>,
        semantic_types: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let term = term.into();
        let word_count = brevity::word_count(&term)?;
        Ok(Concept {
            cui: cui.into(),
            term,
            language: language.into(),
            semantic_types: semantic_types.into_iter().map(Into::into).collect(),
            word_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticTypeFilter {
    excluded: HashSet<String>,
}

impl Default for SemanticTypeFilter {
    fn default() -> Self {
        Self::parse(DEFAULT_EXCLUDED)
    }
}

impl SemanticTypeFilter {
    pub fn new(excluded: impl IntoIterator<Item = impl Into<String>>) -> Self {
        SemanticTypeFilter {
            excluded: excluded.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses an exclusion list: one semantic-type name per line, blank lines
    /// and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn excluded(&self) -> &HashSet<String> {
        &self.excluded
    }

    /// A concept is excluded when any of its semantic types is listed.
    pub fn excludes(&self, concept: &Concept) -> bool {
        concept
            .semantic_types
            .iter()
            .any(|t| self.excluded.contains(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub max_word_count: u32,
    pub max_frequency: u64,
    pub concept_count: usize,
}

/// Parses a tab-separated concept stream.
///
/// Repeated `(cui, term)` records collapse into the first occurrence with
/// their semantic types merged. A CUI that reappears with a different term is
/// rejected, since CUIs identify concepts uniquely within a corpus.
pub fn parse_concepts(input: &str) -> Result<Vec<Concept>> {
    let mut concepts: Vec<Concept> = Vec::new();
    let mut by_cui: HashMap<String, usize> = HashMap::new();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(Error::record(
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let cui = fields[0].trim();
        if cui.is_empty() {
            return Err(Error::record(line_no, "empty CUI"));
        }
        let term = fields[1].trim();
        let types = fields[3]
            .split('|')
            .map(str::trim)
            .filter(|t| !t.is_empty());
        let concept = Concept::new(cui, term, fields[2].trim(), types)
            .map_err(|e| Error::record(line_no, format!("{cui}: {e}")))?;

        match by_cui.get(cui) {
            Some(&existing) if concepts[existing].term == concept.term => {
                concepts[existing]
                    .semantic_types
                    .extend(concept.semantic_types);
            }
            Some(&existing) => {
                return Err(Error::record(
                    line_no,
                    format!(
                        "CUI {cui} already used for term {:?}",
                        concepts[existing].term
                    ),
                ));
            }
            None => {
                by_cui.insert(cui.to_owned(), concepts.len());
                concepts.push(concept);
            }
        }
    }
    Ok(concepts)
}

/// Writes concepts back in the input format.
pub fn format_concepts(concepts: &[Concept]) -> String {
    let mut out = String::new();
    for c in concepts {
        let types: Vec<&str> = c.semantic_types.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            c.cui,
            c.term,
            c.language,
            types.join("|")
        );
    }
    out
}

/// Splits concepts into (retained, rejected), preserving order in both.
pub fn partition_semantic_types(
    concepts: Vec<Concept>,
    filter: &SemanticTypeFilter,
) -> (Vec<Concept>, Vec<Concept>) {
    concepts.into_iter().partition(|c| !filter.excludes(c))
}

pub fn filter_semantic_types(concepts: Vec<Concept>, filter: &SemanticTypeFilter) -> Vec<Concept> {
    partition_semantic_types(concepts, filter).0
}

pub fn filter_language(concepts: Vec<Concept>, lang: &str) -> Vec<Concept> {
    concepts.into_iter().filter(|c| c.language == lang).collect()
}

/// `max_frequency` is left at zero; the frequency stage fills it in.
pub fn corpus_stats(concepts: &[Concept]) -> Result<CorpusStats> {
    let max_word_count = concepts
        .iter()
        .map(|c| c.word_count)
        .max()
        .ok_or(Error::EmptyCorpus)?;
    Ok(CorpusStats {
        max_word_count,
        max_frequency: 0,
        concept_count: concepts.len(),
    })
}
