//! Positional inverted index with an exact field and an edge n-gram field,
//! scored with Okapi BM25.
//!
//! ```text
//! score(D, Q) = Σ idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Units are stored in ascending id order, so posting lists sorted by unit
//! ordinal are also sorted by unit id and ties can be broken on the ordinal.

mod codec;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::analysis::{edge_ngrams, normalize, tokenize, AnalyzerConfig};
use crate::error::{Error, Result};

pub use codec::{read_index, write_index, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "bm25 requires k1 >= 0 and 0 <= b <= 1 (got k1={}, b={})",
                self.k1, self.b
            )));
        }
        Ok(())
    }

    /// Inverse document frequency, never negative.
    pub fn idf(&self, n_units: usize, df: usize) -> f64 {
        let n = n_units as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_weight(&self, tf: f64, unit_len: f64, avgdl: f64) -> f64 {
        if tf <= 0.0 {
            return 0.0;
        }
        let ratio = if avgdl > 0.0 { unit_len / avgdl } else { 1.0 };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * ratio))
    }
}

/// Retrieval mechanism that produced a hit, in descending order of precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Phrase,
    Bigram,
    Keyword,
    Semantic,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Phrase => "phrase",
            Mechanism::Bigram => "bigram",
            Mechanism::Keyword => "keyword",
            Mechanism::Semantic => "semantic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub unit_id: String,
    pub score: f64,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Exact,
    Ngram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPosting {
    pub unit: u32,
    pub positions: Vec<u32>,
}

impl ExactPosting {
    pub fn term_frequency(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramPosting {
    pub unit: u32,
    pub freq: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    analyzer: AnalyzerConfig,
    unit_ids: Vec<String>,
    unit_lengths: Vec<u32>,
    exact: BTreeMap<String, Vec<ExactPosting>>,
    ngram: BTreeMap<String, Vec<GramPosting>>,
    avgdl: f64,
}

fn mean_length(lengths: &[u32]) -> f64 {
    if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / lengths.len() as f64
    }
}

/// Sort by score descending, then unit id ascending, and keep `k`.
pub(crate) fn rank_hits(mut hits: Vec<ScoredHit>, k: usize) -> Vec<ScoredHit> {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.unit_id.cmp(&b.unit_id))
    });
    hits.truncate(k);
    hits
}

impl LexicalIndex {
    /// Builds the index from `(unit_id, text)` pairs.
    pub fn build<'a, I>(units: I, analyzer: AnalyzerConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        analyzer.validate()?;
        let mut units: Vec<(&str, &str)> = units.into_iter().collect();
        units.sort_by(|a, b| a.0.cmp(b.0));
        if let Some(w) = units.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Duplicate {
                kind: "unit",
                id: w[0].0.to_string(),
            });
        }

        let mut exact: HashMap<String, Vec<ExactPosting>> = HashMap::new();
        let mut ngram: HashMap<String, Vec<GramPosting>> = HashMap::new();
        let mut unit_ids = Vec::with_capacity(units.len());
        let mut unit_lengths = Vec::with_capacity(units.len());

        for (ordinal, (id, text)) in units.iter().enumerate() {
            let ordinal = ordinal as u32;
            let tokens = tokenize(text);
            let mut positions: BTreeMap<String, Vec<u32>> = BTreeMap::new();
            for tok in &tokens {
                let term = normalize(&tok.term, &analyzer);
                if term.is_empty() {
                    continue;
                }
                positions.entry(term).or_default().push(tok.position as u32);
            }
            let mut grams: BTreeMap<String, u32> = BTreeMap::new();
            for (term, pos) in &positions {
                for g in edge_ngrams(term, &analyzer) {
                    *grams.entry(g).or_insert(0) += pos.len() as u32;
                }
            }
            for (term, pos) in positions {
                exact.entry(term).or_default().push(ExactPosting {
                    unit: ordinal,
                    positions: pos,
                });
            }
            for (gram, freq) in grams {
                ngram.entry(gram).or_default().push(GramPosting { unit: ordinal, freq });
            }
            unit_ids.push(id.to_string());
            unit_lengths.push(tokens.len() as u32);
        }

        let avgdl = mean_length(&unit_lengths);
        Ok(Self {
            analyzer,
            unit_ids,
            unit_lengths,
            exact: exact.into_iter().collect(),
            ngram: ngram.into_iter().collect(),
            avgdl,
        })
    }

    pub(crate) fn from_parts(
        analyzer: AnalyzerConfig,
        unit_ids: Vec<String>,
        unit_lengths: Vec<u32>,
        exact: BTreeMap<String, Vec<ExactPosting>>,
        ngram: BTreeMap<String, Vec<GramPosting>>,
    ) -> Self {
        let avgdl = mean_length(&unit_lengths);
        Self {
            analyzer,
            unit_ids,
            unit_lengths,
            exact,
            ngram,
            avgdl,
        }
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    /// Number of indexed units (N).
    pub fn len(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_length(&self, unit_id: &str) -> Option<u32> {
        self.ordinal(unit_id).map(|o| self.unit_lengths[o as usize])
    }

    pub fn exact_postings(&self, term: &str) -> Option<&[ExactPosting]> {
        self.exact.get(term).map(Vec::as_slice)
    }

    pub fn gram_postings(&self, gram: &str) -> Option<&[GramPosting]> {
        self.ngram.get(gram).map(Vec::as_slice)
    }

    pub(crate) fn exact_terms(&self) -> &BTreeMap<String, Vec<ExactPosting>> {
        &self.exact
    }

    pub(crate) fn grams(&self) -> &BTreeMap<String, Vec<GramPosting>> {
        &self.ngram
    }

    pub(crate) fn lengths(&self) -> &[u32] {
        &self.unit_lengths
    }

    fn ordinal(&self, unit_id: &str) -> Option<u32> {
        self.unit_ids
            .binary_search_by(|id| id.as_str().cmp(unit_id))
            .ok()
            .map(|o| o as u32)
    }

    fn normalize_all<S: AsRef<str>>(&self, terms: &[S]) -> Vec<String> {
        terms
            .iter()
            .map(|t| normalize(t.as_ref(), &self.analyzer))
            .collect()
    }

    /// `(df, tf)` of a normalized term in a unit on the given field.
    fn term_stats(&self, term: &str, unit: u32, field: Field) -> (usize, usize) {
        match field {
            Field::Exact => self.exact.get(term).map_or((0, 0), |p| {
                let tf = p
                    .binary_search_by_key(&unit, |e| e.unit)
                    .map_or(0, |i| p[i].term_frequency());
                (p.len(), tf)
            }),
            Field::Ngram => self.ngram.get(term).map_or((0, 0), |p| {
                let tf = p
                    .binary_search_by_key(&unit, |e| e.unit)
                    .map_or(0, |i| p[i].freq as usize);
                (p.len(), tf)
            }),
        }
    }

    fn score_normalized(&self, terms: &[String], unit: u32, field: Field, params: &Bm25Params) -> f64 {
        let len = f64::from(self.unit_lengths[unit as usize]);
        terms
            .iter()
            .map(|t| {
                let (df, tf) = self.term_stats(t, unit, field);
                if tf == 0 {
                    0.0
                } else {
                    params.idf(self.len(), df) * params.term_weight(tf as f64, len, self.avgdl)
                }
            })
            .sum()
    }

    /// BM25 of `query_terms` against one unit. Terms are normalized with the
    /// index analyzer; terms absent from the unit contribute nothing.
    pub fn bm25_score<S: AsRef<str>>(
        &self,
        query_terms: &[S],
        unit_id: &str,
        field: Field,
        params: &Bm25Params,
    ) -> Result<f64> {
        let unit = self.ordinal(unit_id).ok_or_else(|| Error::NotFound {
            kind: "unit",
            id: unit_id.to_string(),
        })?;
        Ok(self.score_normalized(&self.normalize_all(query_terms), unit, field, params))
    }

    /// Units containing the normalized terms as a consecutive run, with the
    /// BM25 of those terms on the exact field.
    fn phrase_matches(&self, terms: &[String], params: &Bm25Params) -> Vec<(u32, f64)> {
        if terms.is_empty() {
            return Vec::new();
        }
        let Some(lists) = terms
            .iter()
            .map(|t| self.exact.get(t).map(Vec::as_slice))
            .collect::<Option<Vec<&[ExactPosting]>>>()
        else {
            return Vec::new();
        };
        // Drive the intersection from the shortest list.
        let (driver_idx, driver) = lists
            .iter()
            .enumerate()
            .min_by_key(|(_, l)| l.len())
            .map(|(i, l)| (i, *l))
            .expect("non-empty");

        let mut out = Vec::new();
        'units: for posting in driver {
            let mut per_term = Vec::with_capacity(lists.len());
            for list in &lists {
                match list.binary_search_by_key(&posting.unit, |p| p.unit) {
                    Ok(i) => per_term.push(&list[i].positions),
                    Err(_) => continue 'units,
                }
            }
            let found = posting.positions.iter().any(|&p| {
                let Some(start) = p.checked_sub(driver_idx as u32) else {
                    return false;
                };
                per_term
                    .iter()
                    .enumerate()
                    .all(|(offset, pos)| pos.binary_search(&(start + offset as u32)).is_ok())
            });
            if found {
                out.push((posting.unit, self.score_normalized(terms, posting.unit, Field::Exact, params)));
            }
        }
        out
    }

    fn hits(&self, scored: impl IntoIterator<Item = (u32, f64)>, mechanism: Mechanism, k: usize) -> Vec<ScoredHit> {
        rank_hits(
            scored
                .into_iter()
                .map(|(unit, score)| ScoredHit {
                    unit_id: self.unit_ids[unit as usize].clone(),
                    score,
                    mechanism,
                })
                .collect(),
            k,
        )
    }

    /// Units whose exact field contains the phrase as consecutive tokens.
    pub fn phrase_search<S: AsRef<str>>(&self, phrase: &[S], k: usize, params: &Bm25Params) -> Vec<ScoredHit> {
        let terms = self.normalize_all(phrase);
        self.hits(self.phrase_matches(&terms, params), Mechanism::Phrase, k)
    }

    /// Units containing every phrase; score is the sum over phrases.
    pub fn phrases_search<S: AsRef<str>>(&self, phrases: &[Vec<S>], k: usize, params: &Bm25Params) -> Vec<ScoredHit> {
        let mut acc: Option<HashMap<u32, f64>> = None;
        for phrase in phrases {
            let matches: HashMap<u32, f64> = self
                .phrase_matches(&self.normalize_all(phrase), params)
                .into_iter()
                .collect();
            acc = Some(match acc {
                None => matches,
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(u, s)| matches.get(&u).map(|m| (u, s + m)))
                    .collect(),
            });
        }
        self.hits(acc.unwrap_or_default(), Mechanism::Phrase, k)
    }

    /// Each bigram is matched as a two-token phrase; a unit's score is the
    /// sum over the bigrams it contains.
    pub fn bigram_search<S: AsRef<str>>(&self, bigrams: &[(S, S)], k: usize, params: &Bm25Params) -> Vec<ScoredHit> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for (a, b) in bigrams {
            let terms = self.normalize_all(&[a.as_ref(), b.as_ref()]);
            for (unit, score) in self.phrase_matches(&terms, params) {
                *acc.entry(unit).or_insert(0.0) += score;
            }
        }
        self.hits(acc, Mechanism::Bigram, k)
    }

    /// Whole query terms matched against indexed edge n-grams, ranked by BM25
    /// on the n-gram field.
    pub fn keyword_search<S: AsRef<str>>(&self, terms: &[S], k: usize, params: &Bm25Params) -> Vec<ScoredHit> {
        let terms = self.normalize_all(terms);
        let mut candidates: Vec<u32> = terms
            .iter()
            .filter_map(|t| self.ngram.get(t))
            .flat_map(|p| p.iter().map(|g| g.unit))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let scored = candidates
            .into_iter()
            .map(|u| (u, self.score_normalized(&terms, u, Field::Ngram, params)));
        self.hits(scored, Mechanism::Keyword, k)
    }
}
