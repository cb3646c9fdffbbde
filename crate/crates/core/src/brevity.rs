//! Word-count brevity factor.
//!
//! A term's brevity is `1 - words / max_words`, so the longest term in the
//! corpus scores 0 and a single word scores `(max - 1) / max`.

use crate::error::{Error, Result};

/// Longest concept name observed in the full terminology, used when a term is
/// scored without corpus context.
pub const DEFAULT_MAX_WORD_COUNT: u32 = 202;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTerm {
    tokens: Vec<String>,
}

impl TokenizedTerm {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

/// Splits a term into words.
///
/// Runs of whitespace separate words. Leading and trailing punctuation is
/// stripped from each word and punctuation-only tokens are dropped, so
/// `"aorto-aortic"` stays one word and a stray `"-"` or `";"` is not counted.
pub fn tokenize(term: &str) -> Result<TokenizedTerm> {
    let tokens: Vec<String> = term
        .split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyTerm);
    }
    Ok(TokenizedTerm { tokens })
}

/// Word count of `term` under [`tokenize`].
pub fn word_count(term: &str) -> Result<u32> {
    tokenize(term).map(|t| t.count())
}

pub fn brevity_score(word_count: u32, max_word_count: u32) -> Result<f64> {
    if max_word_count == 0 {
        return Err(Error::InvalidArgument(
            "max word count must be positive".into(),
        ));
    }
    if word_count == 0 {
        return Err(Error::InvalidArgument("word count must be positive".into()));
    }
    if word_count > max_word_count {
        return Err(Error::InvalidArgument(format!(
            "word count {word_count} exceeds max word count {max_word_count}"
        )));
    }
    Ok(1.0 - f64::from(word_count) / f64::from(max_word_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("blood pressure test").unwrap().count(), 3);
        assert_eq!(tokenize("aorto-aortic tube endograft").unwrap().count(), 3);
        assert_eq!(tokenize("cholesterol").unwrap().count(), 1);
        assert_eq!(tokenize("  heart\t\tattack  ").unwrap().count(), 2);
    }

    #[test]
    fn punctuation_only_tokens_are_dropped() {
        let t = tokenize("repair - aorta ; (eg, rupture)").unwrap();
        assert_eq!(t.tokens(), &["repair", "aorta", "eg", "rupture"]);
    }

    #[test]
    fn blank_terms_are_rejected() {
        assert!(matches!(tokenize(""), Err(Error::EmptyTerm)));
        assert!(matches!(tokenize("   \t"), Err(Error::EmptyTerm)));
        assert!(matches!(tokenize(" -- ; "), Err(Error::EmptyTerm)));
    }

    #[test]
    fn brevity_examples() {
        assert_eq!(brevity_score(202, 202).unwrap(), 0.0);
        assert!((brevity_score(1, 202).unwrap() - 201.0 / 202.0).abs() < 1e-12);
        assert_eq!(brevity_score(101, 202).unwrap(), 0.5);
    }

    #[test]
    fn brevity_rejects_out_of_range() {
        assert!(brevity_score(203, 202).is_err());
        assert!(brevity_score(1, 0).is_err());
        assert!(brevity_score(0, 10).is_err());
    }

    proptest! {
        #[test]
        fn strictly_decreasing(max in 2u32..5000, a in 1u32..5000, b in 1u32..5000) {
            let (a, b) = (a.min(max), b.min(max));
            prop_assume!(a < b);
            prop_assert!(brevity_score(a, max).unwrap() > brevity_score(b, max).unwrap());
        }

        #[test]
        fn scale_invariant(max in 1u32..1000, wc in 1u32..1000, k in 1u32..50) {
            let wc = wc.min(max);
            let base = brevity_score(wc, max).unwrap();
            let scaled = brevity_score(k * wc, k * max).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }

        #[test]
        fn word_count_matches_token_list(words in proptest::collection::vec("[a-z]{1,8}", 1..12)) {
            let term = words.join("  ");
            prop_assert_eq!(word_count(&term).unwrap() as usize, words.len());
        }
    }
}
