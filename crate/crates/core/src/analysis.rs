//! Tokenization, normalization, edge n-grams and query parsing.
//!
//! Every index in the crate goes through the same analyzer so that a term
//! normalized at query time lines up with the one written at build time.

use serde::{Deserialize, Serialize};
use unicode_normalization::{char::is_combining_mark, UnicodeNormalization};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub min_gram: usize,
    pub max_gram: usize,
    pub lowercase: bool,
    pub ascii_fold: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            min_gram: 4,
            max_gram: 30,
            lowercase: true,
            ascii_fold: true,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_gram == 0 || self.min_gram > self.max_gram {
            return Err(Error::Config(format!(
                "analyzer requires 1 <= min_gram <= max_gram (got {}..{})",
                self.min_gram, self.max_gram
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub term: String,
    pub position: usize,
}

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201c}' | '\u{201d}')
}

/// Splits on whitespace and trims leading/trailing punctuation from each piece.
/// Inner hyphens, slashes and other joiners stay inside the token.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .enumerate()
        .map(|(position, term)| Token {
            term: term.to_string(),
            position,
        })
        .collect()
}

/// Tokenize and keep only the term strings.
pub fn tokenize_terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.term).collect()
}

fn fold_char(c: char, out: &mut String) {
    // Letters that do not decompose into base + combining mark.
    let replacement = match c {
        'æ' => "ae",
        'Æ' => "AE",
        'œ' => "oe",
        'Œ' => "OE",
        'ß' => "ss",
        'ø' => "o",
        'Ø' => "O",
        'đ' | 'ð' => "d",
        'Đ' | 'Ð' => "D",
        'ł' => "l",
        'Ł' => "L",
        'þ' => "th",
        'Þ' => "TH",
        'ı' => "i",
        _ => {
            out.push(c);
            return;
        }
    };
    out.push_str(replacement);
}

/// Lowercase and fold diacritics to ASCII. Characters without an ASCII
/// equivalent (Greek letters, for example) pass through unchanged.
pub fn normalize(term: &str, cfg: &AnalyzerConfig) -> String {
    let lowered;
    let term = if cfg.lowercase {
        lowered = term.to_lowercase();
        lowered.as_str()
    } else {
        term
    };
    if !cfg.ascii_fold || term.is_ascii() {
        return term.nfc().collect();
    }
    let mut out = String::with_capacity(term.len());
    for c in term.nfd().filter(|c| !is_combining_mark(*c)) {
        fold_char(c, &mut out);
    }
    out.nfc().collect()
}

/// Prefixes of `term` with lengths `min_gram..=min(max_gram, len)`, shortest
/// first, followed by the full term when it is not already one of them.
pub fn edge_ngrams(term: &str, cfg: &AnalyzerConfig) -> Vec<String> {
    let boundaries: Vec<usize> = term
        .char_indices()
        .map(|(i, _)| i)
        .skip(1)
        .chain(std::iter::once(term.len()))
        .collect();
    let len = boundaries.len();
    if term.is_empty() {
        return Vec::new();
    }
    let upper = cfg.max_gram.min(len);
    let mut grams: Vec<String> = (cfg.min_gram..=upper)
        .map(|n| term[..boundaries[n - 1]].to_string())
        .collect();
    if len < cfg.min_gram || len > cfg.max_gram {
        grams.push(term.to_string());
    }
    grams
}

/// Consecutive token pairs, in order.
pub fn extract_bigrams<T: Clone>(tokens: &[T]) -> Vec<(T, T)> {
    tokens
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Slot {
    Phrase(usize),
    Free(usize),
}

/// A parsed query: quoted phrases plus the remaining free terms, with the
/// original interleaving kept so the full token sequence can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAst {
    pub phrases: Vec<Vec<String>>,
    pub free_terms: Vec<String>,
    pub raw: String,
    layout: Vec<Slot>,
}

impl QueryAst {
    /// Every query token in original order, phrases expanded in place.
    pub fn sequence(&self) -> Vec<String> {
        let mut out = Vec::new();
        for slot in &self.layout {
            match *slot {
                Slot::Phrase(i) => out.extend(self.phrases[i].iter().cloned()),
                Slot::Free(i) => out.push(self.free_terms[i].clone()),
            }
        }
        out
    }

    /// Rebuilds a human-readable query string with phrases re-quoted.
    pub fn to_query_string(&self) -> String {
        self.layout
            .iter()
            .map(|slot| match *slot {
                Slot::Phrase(i) => format!("\"{}\"", self.phrases[i].join(" ")),
                Slot::Free(i) => self.free_terms[i].clone(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn has_phrases(&self) -> bool {
        !self.phrases.is_empty()
    }
}

/// Parses a raw query. Balanced pairs of double quotes delimit phrases; an
/// unmatched trailing quote is kept as a literal character.
pub fn parse_query(raw: &str) -> Result<QueryAst> {
    if raw.trim().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let quote_positions: Vec<usize> = raw
        .char_indices()
        .filter(|(_, c)| is_quote(*c))
        .map(|(i, _)| i)
        .collect();
    let paired = quote_positions.len() / 2 * 2;

    let mut phrases = Vec::new();
    let mut free_terms = Vec::new();
    let mut layout = Vec::new();
    let push_free = |text: &str, free_terms: &mut Vec<String>, layout: &mut Vec<Slot>| {
        for t in tokenize_terms(text) {
            layout.push(Slot::Free(free_terms.len()));
            free_terms.push(t);
        }
    };

    let mut cursor = 0;
    for pair in quote_positions[..paired].chunks(2) {
        let (open, close) = (pair[0], pair[1]);
        push_free(&raw[cursor..open], &mut free_terms, &mut layout);
        let inner_start = open + raw[open..].chars().next().map_or(1, char::len_utf8);
        let inner = tokenize_terms(&raw[inner_start..close]);
        if !inner.is_empty() {
            layout.push(Slot::Phrase(phrases.len()));
            phrases.push(inner);
        }
        cursor = close + raw[close..].chars().next().map_or(1, char::len_utf8);
    }
    push_free(&raw[cursor..], &mut free_terms, &mut layout);

    if layout.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(QueryAst {
        phrases,
        free_terms,
        raw: raw.to_string(),
        layout,
    })
}

impl QueryAst {
    /// Replace free terms in place, keeping phrases and layout.
    pub(crate) fn with_free_terms(&self, free_terms: Vec<String>) -> QueryAst {
        debug_assert_eq!(free_terms.len(), self.free_terms.len());
        QueryAst {
            free_terms,
            ..self.clone()
        }
    }
}
