//! Behavioral-indicator lexicon for the five trait dimensions.
//!
//! Each dimension carries high- and low-expression phrases. Matching is
//! case-insensitive over alphanumeric tokens, so `self-disciplined` and
//! `self disciplined` are the same phrase. At each position the longest
//! phrase wins and matches never overlap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::Dimension;

pub(crate) const BUILTIN: &str = include_str!("../fixtures/indicator_lexicon.json");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("dimension `{0}` is missing from the lexicon")]
    MissingDimension(&'static str),
    #[error("phrase `{phrase}` is empty or has no word characters")]
    EmptyPhrase { phrase: String },
    #[error("phrase `{a}` overlaps `{b}` from a different indicator list")]
    Ambiguous { a: String, b: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolarityLists {
    high: Vec<String>,
    low: Vec<String>,
}

#[derive(Debug, Clone)]
struct Phrase {
    text: String,
    tokens: Vec<String>,
    dim: Dimension,
    polarity: Polarity,
    order: usize,
}

/// Per-dimension indicator counts found in a text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IndicatorCounts {
    pub high: [usize; 5],
    pub low: [usize; 5],
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    phrases: Vec<Phrase>,
    max_len: usize,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_seq(hay: &[String], needle: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let raw: BTreeMap<String, PolarityLists> = serde_json::from_str(text)?;
        let mut phrases = Vec::new();
        for dim in Dimension::ALL {
            let lists = raw.get(dim.name()).ok_or(LexiconError::MissingDimension(dim.name()))?;
            for (polarity, list) in [(Polarity::High, &lists.high), (Polarity::Low, &lists.low)] {
                for p in list {
                    let tokens = tokenize(p);
                    if tokens.is_empty() {
                        return Err(LexiconError::EmptyPhrase { phrase: p.clone() });
                    }
                    phrases.push(Phrase {
                        text: p.clone(),
                        tokens,
                        dim,
                        polarity,
                        order: phrases.len(),
                    });
                }
            }
        }
        for (i, a) in phrases.iter().enumerate() {
            for b in &phrases[i + 1..] {
                let same_list = a.dim == b.dim && a.polarity == b.polarity;
                if !same_list && (contains_seq(&a.tokens, &b.tokens) || contains_seq(&b.tokens, &a.tokens)) {
                    return Err(LexiconError::Ambiguous {
                        a: a.text.clone(),
                        b: b.text.clone(),
                    });
                }
            }
        }
        // Longest phrases first so the scan prefers them.
        phrases.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()));
        let max_len = phrases.iter().map(|p| p.tokens.len()).max().unwrap_or(0);
        Ok(Self { phrases, max_len })
    }

    /// Phrases for one list, in authored order.
    pub fn phrases(&self, dim: Dimension, polarity: Polarity) -> Vec<&str> {
        let mut list: Vec<&Phrase> = self
            .phrases
            .iter()
            .filter(|p| p.dim == dim && p.polarity == polarity)
            .collect();
        list.sort_by_key(|p| p.order);
        list.into_iter().map(|p| p.text.as_str()).collect()
    }

    pub fn count(&self, text: &str) -> IndicatorCounts {
        let tokens = tokenize(text);
        let mut counts = IndicatorCounts::default();
        let mut i = 0;
        while i < tokens.len() {
            let rest = &tokens[i..tokens.len().min(i + self.max_len)];
            match self.phrases.iter().find(|p| rest.starts_with(&p.tokens)) {
                Some(p) => {
                    let slot = match p.polarity {
                        Polarity::High => &mut counts.high,
                        Polarity::Low => &mut counts.low,
                    };
                    slot[p.dim.index()] += 1;
                    i += p.tokens.len();
                }
                None => i += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads() {
        let lex = Lexicon::builtin();
        assert!(lex.phrases(Dimension::Openness, Polarity::High).contains(&"curious"));
        assert!(lex.phrases(Dimension::Neuroticism, Polarity::Low).len() >= 4);
    }

    #[test]
    fn hyphen_and_case_insensitive() {
        let lex = Lexicon::builtin();
        let c = lex.count("I am Self Disciplined and GOAL-oriented.");
        assert_eq!(c.high[Dimension::Conscientiousness.index()], 2);
        assert_eq!(c.low, [0; 5]);
    }

    #[test]
    fn longest_match_counts_once() {
        let lex = Lexicon::builtin();
        let c = lex.count("self-disciplined");
        assert_eq!(c.high[Dimension::Conscientiousness.index()], 1);
    }

    #[test]
    fn word_boundaries_respected() {
        let lex = Lexicon::builtin();
        // "calmness" and "unstable" are not the indicator words themselves
        let c = lex.count("calmness is unstable");
        assert_eq!(c, IndicatorCounts::default());
    }

    #[test]
    fn rejects_cross_list_overlap() {
        let bad = BUILTIN.replace("\"on edge\"", "\"calm down\"");
        assert!(matches!(Lexicon::from_json(&bad), Err(LexiconError::Ambiguous { .. })));
    }
}
