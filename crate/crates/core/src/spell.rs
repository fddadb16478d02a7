//! Frequency-based spelling correction over the indexed vocabulary.
//!
//! Candidates are vocabulary words within a bounded number of edits
//! (deletion, adjacent transposition, substitution, insertion). The
//! correction is the most frequent candidate of the nearest non-empty tier:
//! the word itself, then distance 1, then distance 2, else the input unchanged.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::{normalize, AnalyzerConfig, QueryAst};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpellConfig {
    pub max_edit_distance: usize,
}

impl Default for SpellConfig {
    fn default() -> Self {
        Self { max_edit_distance: 2 }
    }
}

impl SpellConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.max_edit_distance) {
            return Err(Error::Config(format!(
                "max_edit_distance must be 1 or 2 (got {})",
                self.max_edit_distance
            )));
        }
        Ok(())
    }
}

/// Unigram counts over the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageModel {
    counts: BTreeMap<String, u64>,
    total: u64,
    alphabet: Vec<char>,
}

impl LanguageModel {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for t in terms {
            let t = t.as_ref();
            if !t.is_empty() {
                *counts.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total = counts.values().sum();
        let alphabet: BTreeSet<char> = counts.keys().flat_map(|k| k.chars()).collect();
        Self {
            counts,
            total,
            alphabet: alphabet.into_iter().collect(),
        }
    }

    pub fn count(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.counts.contains_key(term)
    }

    /// Prior probability of `term`, `count / total`.
    pub fn probability(&self, term: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(term) as f64 / self.total as f64
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Writes the `term<TAB>count` table, sorted by term.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (term, count) in &self.counts {
            writeln!(out, "{term}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            if line.is_empty() {
                continue;
            }
            let (term, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse("vocabulary", format!("line {}: missing tab", i + 1)))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse("vocabulary", format!("line {}: bad count `{count}`", i + 1)))?;
            counts.insert(term.to_string(), count);
        }
        Ok(Self::from_counts(counts))
    }

    fn alphabet(&self) -> &[char] {
        &self.alphabet
    }
}

/// All strings exactly one edit away from `word`.
pub fn edits1(word: &str, alphabet: &[char]) -> HashSet<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = HashSet::new();
    let build = |parts: &[&[char]]| parts.iter().flat_map(|p| p.iter()).collect::<String>();
    for i in 0..=n {
        let (left, right) = chars.split_at(i);
        if !right.is_empty() {
            out.insert(build(&[left, &right[1..]]));
            for &c in alphabet {
                if c != right[0] {
                    out.insert(build(&[left, &[c], &right[1..]]));
                }
            }
        }
        if right.len() > 1 && right[0] != right[1] {
            out.insert(build(&[left, &[right[1], right[0]], &right[2..]]));
        }
        for &c in alphabet {
            out.insert(build(&[left, &[c], right]));
        }
    }
    out.remove(word);
    out
}

fn known_within_1(word: &str, lm: &LanguageModel) -> BTreeSet<String> {
    edits1(word, lm.alphabet())
        .into_iter()
        .filter(|e| lm.contains(e))
        .collect()
}

fn known_within_2(word: &str, lm: &LanguageModel) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e1 in edits1(word, lm.alphabet()) {
        for e2 in edits1(&e1, lm.alphabet()) {
            if lm.contains(&e2) {
                out.insert(e2);
            }
        }
    }
    out
}

/// Vocabulary words reachable from `w` in at most `max_edit_distance` edits.
pub fn candidates(w: &str, lm: &LanguageModel, cfg: &SpellConfig) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if lm.contains(w) {
        out.insert(w.to_string());
    }
    out.extend(known_within_1(w, lm));
    if cfg.max_edit_distance >= 2 {
        out.extend(known_within_2(w, lm));
    }
    out
}

fn most_frequent(tier: BTreeSet<String>, lm: &LanguageModel) -> Option<String> {
    // BTreeSet iterates in lexicographic order; keep the first maximum.
    let mut best: Option<(u64, String)> = None;
    for c in tier {
        let count = lm.count(&c);
        if best.as_ref().map_or(true, |(b, _)| count > *b) {
            best = Some((count, c));
        }
    }
    best.map(|(_, c)| c)
}

/// The most probable correction of `w` within the nearest non-empty candidate tier.
pub fn correct(w: &str, lm: &LanguageModel, cfg: &SpellConfig) -> String {
    if w.is_empty() || lm.contains(w) {
        return w.to_string();
    }
    if let Some(c) = most_frequent(known_within_1(w, lm), lm) {
        return c;
    }
    if cfg.max_edit_distance >= 2 {
        if let Some(c) = most_frequent(known_within_2(w, lm), lm) {
            return c;
        }
    }
    w.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub original: String,
    pub corrected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpellResult {
    pub query: QueryAst,
    pub changed: bool,
    pub corrections: Vec<Correction>,
}

/// Corrects every free term of the query. Quoted phrases are left untouched.
pub fn correct_query(
    ast: &QueryAst,
    lm: &LanguageModel,
    cfg: &SpellConfig,
    analyzer: &AnalyzerConfig,
) -> SpellResult {
    let mut corrections = Vec::new();
    let free_terms = ast
        .free_terms
        .iter()
        .map(|term| {
            let normalized = normalize(term, analyzer);
            let fixed = correct(&normalized, lm, cfg);
            if fixed == normalized {
                term.clone()
            } else {
                corrections.push(Correction {
                    original: term.clone(),
                    corrected: fixed.clone(),
                });
                fixed
            }
        })
        .collect();
    SpellResult {
        query: ast.with_free_terms(free_terms),
        changed: !corrections.is_empty(),
        corrections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::parse_query;
    use proptest::prelude::*;

    /// Optimal string alignment distance, used as an independent check on the edit generator.
    fn osa(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
                if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                    d[i][j] = d[i][j].min(d[i - 2][j - 2] + 1);
                }
            }
        }
        d[a.len()][b.len()]
    }

    fn lm(pairs: &[(&str, u64)]) -> LanguageModel {
        LanguageModel::from_counts(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    #[test]
    fn candidate_examples() {
        let cfg = SpellConfig::default();
        let m = lm(&[("virus", 5)]);
        assert!(candidates("virus", &m, &cfg).contains("virus"));
        assert_eq!(candidates("virsu", &m, &cfg).into_iter().collect::<Vec<_>>(), vec!["virus"]);
        let bio = lm(&[("virus", 5), ("bat", 3), ("coronavirus", 9), ("reservoir", 2)]);
        assert!(candidates("xqzw", &bio, &cfg).is_empty());
    }

    #[test]
    fn correct_examples() {
        let cfg = SpellConfig::default();
        let m = lm(&[("virus", 50), ("virtue", 3)]);
        assert_eq!(correct("virus", &m, &cfg), "virus");
        assert_eq!(correct("virsu", &m, &cfg), "virus");
        assert_eq!(correct("zzzzzz", &m, &cfg), "zzzzzz");
    }

    #[test]
    fn tier_dominance_and_tie_break() {
        let cfg = SpellConfig::default();
        // "bat" is known; "cat" is a much more frequent neighbour but must not win.
        let m = lm(&[("bat", 1), ("cat", 1000)]);
        assert_eq!(correct("bat", &m, &cfg), "bat");
        // equal counts: lexicographically smaller candidate
        let m = lm(&[("abc", 4), ("abd", 4)]);
        assert_eq!(correct("abx", &m, &cfg), "abc");
        // distance-1 beats a more frequent distance-2 candidate
        let m = lm(&[("spore", 1), ("sport", 500)]);
        assert_eq!(correct("sporex", &m, &cfg), "spore");
        let one = SpellConfig { max_edit_distance: 1 };
        let m = lm(&[("coronavirus", 10)]);
        assert_eq!(correct("coronavrius", &m, &one), "coronavirus");
        assert_eq!(correct("cornavrius", &m, &one), "cornavrius");
        assert_eq!(correct("cornavrius", &m, &SpellConfig::default()), "coronavirus");
    }

    #[test]
    fn query_correction_exempts_phrases() {
        let cfg = SpellConfig::default();
        let an = AnalyzerConfig::default();
        let m = lm(&[("coronavirus", 10), ("sars-cov", 4)]);
        let r = correct_query(&parse_query("coronavirus").unwrap(), &m, &cfg, &an);
        assert!(!r.changed);
        let r = correct_query(&parse_query("coronavrius").unwrap(), &m, &cfg, &an);
        assert!(r.changed);
        assert_eq!(r.query.free_terms, vec!["coronavirus"]);
        let r = correct_query(&parse_query("\"SRAS-CoV\"").unwrap(), &m, &cfg, &an);
        assert!(!r.changed);
        assert_eq!(r.query.phrases, vec![vec!["SRAS-CoV".to_string()]]);
    }

    #[test]
    fn table_round_trip() {
        let m = lm(&[("b", 2), ("a", 1)]);
        let mut buf = Vec::new();
        m.write_table(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a\t1\nb\t2\n");
        assert_eq!(LanguageModel::read_table(&buf[..]).unwrap(), m);
        assert_eq!(m.total(), 3);
        assert!((m.probability("b") - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn edits1_are_exactly_distance_one(word in "[abc]{0,6}") {
            let alphabet = ['a', 'b', 'c'];
            let edits = edits1(&word, &alphabet);
            for e in &edits {
                prop_assert_eq!(osa(&word, e), 1, "{} -> {}", word, e);
            }
            // completeness against brute force over short strings
            for len in word.chars().count().saturating_sub(1)..=word.chars().count() + 1 {
                let mut stack = vec![String::new()];
                while let Some(s) = stack.pop() {
                    if s.chars().count() == len {
                        if osa(&word, &s) == 1 {
                            prop_assert!(edits.contains(&s), "missing {}", s);
                        }
                        continue;
                    }
                    for c in alphabet {
                        stack.push(format!("{s}{c}"));
                    }
                }
            }
        }

        #[test]
        fn correct_is_idempotent_and_a_candidate(
            vocab in proptest::collection::btree_map("[a-d]{2,5}", 1u64..20, 1..15),
            w in "[a-d]{1,6}",
        ) {
            let m = LanguageModel::from_counts(vocab);
            let cfg = SpellConfig::default();
            let c = correct(&w, &m, &cfg);
            prop_assert_eq!(correct(&c, &m, &cfg), c.clone());
            prop_assert!(c == w || candidates(&w, &m, &cfg).contains(&c));
            // two single edits, possibly overlapping, reach the correction
            let two_steps = osa(&w, &c) <= 2 || {
                let n = w.chars().count();
                let mut reachable = false;
                let mut stack = vec![String::new()];
                while let Some(s) = stack.pop() {
                    let len = s.chars().count();
                    if len + 1 >= n && osa(&w, &s) == 1 && osa(&s, &c) == 1 {
                        reachable = true;
                        break;
                    }
                    if len <= n {
                        for ch in ['a', 'b', 'c', 'd'] {
                            stack.push(format!("{s}{ch}"));
                        }
                    }
                }
                reachable
            };
            prop_assert!(two_steps);
        }
    }
}
