//! Retrieval and reading metrics, trec-style qrels/run files, and a small
//! report harness.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Query id → unit id → graded relevance.
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;
/// Query id → ranked unit ids.
pub type Run = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `rel`
    #[default]
    Linear,
    /// `2^rel − 1`
    Exponential,
}

impl Gain {
    fn apply(self, rel: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(rel),
            Gain::Exponential => 2f64.powi(rel as i32) - 1.0,
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

/// Relevant (grade ≥ 1) units among the top `k`, over `k`. Missing slots
/// count as non-relevant.
pub fn precision_at_k<S: AsRef<str>>(ranking: &[S], judged: &BTreeMap<String, u32>, k: usize) -> Result<f64> {
    check_k(k)?;
    let hits = ranking
        .iter()
        .take(k)
        .filter(|u| judged.get(u.as_ref()).is_some_and(|&g| g >= 1))
        .count();
    Ok(hits as f64 / k as f64)
}

fn dcg(grades: impl Iterator<Item = u32>, gain: Gain) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain.apply(g) / ((i + 2) as f64).log2())
        .sum()
}

pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judged: &BTreeMap<String, u32>, k: usize, gain: Gain) -> Result<f64> {
    check_k(k)?;
    let actual = dcg(
        ranking.iter().take(k).map(|u| judged.get(u.as_ref()).copied().unwrap_or(0)),
        gain,
    );
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let ideal = dcg(ideal.into_iter().take(k), gain);
    Ok(if ideal == 0.0 { 0.0 } else { actual / ideal })
}

const ARTICLES: &[&str] = &["a", "an", "the"];

/// Lowercase, drop punctuation and articles, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> u8 {
    let p = normalize_answer(prediction);
    u8::from(golds.iter().any(|g| normalize_answer(g.as_ref()) == p))
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let p: Vec<&str> = p.split_whitespace().collect();
    let g: Vec<&str> = g.split_whitespace().collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &g {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn token_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds
        .iter()
        .map(|g| f1_single(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

fn lines<R: BufRead>(reader: R, what: &'static str) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(move |(i, l)| match l {
        Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(Error::io(what, e))),
    })
}

/// `qid unit grade` or `qid iter unit grade`, whitespace separated.
pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut out = Qrels::new();
    for line in lines(reader, "<qrels>") {
        let (n, line) = line?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (qid, unit, grade) = match cols.as_slice() {
            [q, u, g] | [q, _, u, g] => (q, u, g),
            _ => return Err(Error::parse("qrels", format!("line {n}: expected 3 or 4 columns"))),
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse("qrels", format!("line {n}: grade `{grade}` is not an integer")))?;
        let grade = u32::try_from(grade.max(0)).map_err(|_| Error::parse("qrels", format!("line {n}: grade too large")))?;
        out.entry(qid.to_string()).or_default().insert(unit.to_string(), grade);
    }
    Ok(out)
}

/// `qid unit` in rank order, or the six-column `qid Q0 unit rank score tag`
/// form ordered by rank.
pub fn read_run<R: BufRead>(reader: R) -> Result<Run> {
    let mut ranked: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    let mut order = 0usize;
    for line in lines(reader, "<run>") {
        let (n, line) = line?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (qid, unit, rank) = match cols.as_slice() {
            [q, u] => (q, u, order),
            [q, _, u, r, _, _] => (
                q,
                u,
                r.parse()
                    .map_err(|_| Error::parse("run", format!("line {n}: rank `{r}` is not an integer")))?,
            ),
            _ => return Err(Error::parse("run", format!("line {n}: expected 2 or 6 columns"))),
        };
        order += 1;
        let list = ranked.entry(qid.to_string()).or_default();
        if list.iter().any(|(_, u)| u == unit) {
            return Err(Error::Duplicate {
                kind: "run entry",
                id: format!("{qid} {unit}"),
            });
        }
        list.push((rank, unit.to_string()));
    }
    Ok(ranked
        .into_iter()
        .map(|(q, mut v)| {
            v.sort_by_key(|(r, _)| *r);
            (q, v.into_iter().map(|(_, u)| u).collect())
        })
        .collect())
}

/// `qid<TAB>answer`; repeated qids accumulate alternative answers.
pub fn read_answers<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in lines(reader, "<answers>") {
        let (n, line) = line?;
        let (q, a) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("answers", format!("line {n}: expected qid<TAB>answer")))?;
        out.entry(q.to_string()).or_default().push(a.to_string());
    }
    Ok(out)
}

pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: usize,
    /// k → mean P@k
    pub precision: BTreeMap<usize, f64>,
    /// k → mean NDCG@k
    pub ndcg: BTreeMap<usize, f64>,
}

/// Means over the queries present in the qrels; queries absent from the run
/// score zero.
pub fn evaluate_run(run: &Run, qrels: &Qrels, ks: &[usize], gain: Gain) -> Result<RetrievalReport> {
    let mut precision = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    let empty = Vec::new();
    for &k in ks {
        let (mut p, mut n) = (0.0, 0.0);
        for (qid, judged) in qrels {
            let ranking = run.get(qid).unwrap_or(&empty);
            p += precision_at_k(ranking, judged, k)?;
            n += ndcg_at_k(ranking, judged, k, gain)?;
        }
        let q = qrels.len().max(1) as f64;
        precision.insert(k, p / q);
        ndcg.insert(k, n / q);
    }
    Ok(RetrievalReport {
        queries: qrels.len(),
        precision,
        ndcg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub questions: usize,
    pub exact_match: f64,
    pub f1: f64,
}

/// Means over gold questions; missing predictions count as empty answers.
pub fn evaluate_answers(predictions: &BTreeMap<String, Vec<String>>, golds: &BTreeMap<String, Vec<String>>) -> QaReport {
    let (mut em, mut f1) = (0.0, 0.0);
    for (qid, gold) in golds {
        let pred = predictions.get(qid).and_then(|p| p.first()).map_or("", String::as_str);
        em += f64::from(exact_match(pred, gold));
        f1 += token_f1(pred, gold);
    }
    let n = golds.len().max(1) as f64;
    QaReport {
        questions: golds.len(),
        exact_match: em / n,
        f1: f1 / n,
    }
}

/// Tab-separated metric table, one metric per line.
pub fn format_report(retrieval: Option<&RetrievalReport>, qa: Option<&QaReport>) -> String {
    let mut out = String::from("metric\tvalue\n");
    if let Some(r) = retrieval {
        let _ = writeln!(out, "queries\t{}", r.queries);
        for (k, v) in &r.precision {
            let _ = writeln!(out, "P@{k}\t{v:.4}");
        }
        for (k, v) in &r.ndcg {
            let _ = writeln!(out, "NDCG@{k}\t{v:.4}");
        }
    }
    if let Some(q) = qa {
        let _ = writeln!(out, "questions\t{}", q.questions);
        let _ = writeln!(out, "EM\t{:.4}", q.exact_match);
        let _ = writeln!(out, "F1\t{:.4}", q.f1);
    }
    out
}

/// Rejects duplicate units inside one ranking.
pub fn check_ranking<S: AsRef<str>>(ranking: &[S]) -> Result<()> {
    let mut seen = HashSet::new();
    for u in ranking {
        if !seen.insert(u.as_ref()) {
            return Err(Error::Duplicate {
                kind: "ranked unit",
                id: u.as_ref().to_string(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn judged(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn precision_examples() {
        let j = judged(&[("a", 1), ("c", 2)]);
        assert!((precision_at_k(&["a", "b", "c"], &j, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(precision_at_k(&["a", "c"], &j, 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&["a"], &j, 4).unwrap(), 0.25);
        assert_eq!(precision_at_k::<&str>(&[], &j, 4).unwrap(), 0.0);
        assert!(precision_at_k(&["a"], &j, 0).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let j = judged(&[("x", 0), ("y", 2), ("z", 3)]);
        let hand = (2.0 / 3f64.log2() + 3.0 / 2.0) / (3.0 + 2.0 / 3f64.log2());
        let got = ndcg_at_k(&["x", "y", "z"], &j, 3, Gain::Linear).unwrap();
        assert!((got - hand).abs() < 1e-12);
        assert!((got - 0.6480).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&["z", "y", "x"], &j, 3, Gain::Linear).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["a"], &judged(&[("a", 0)]), 3, Gain::Linear).unwrap(), 0.0);
        let exp = ndcg_at_k(&["x", "y", "z"], &j, 3, Gain::Exponential).unwrap();
        let hand_exp = (3.0 / 3f64.log2() + 7.0 / 2.0) / (7.0 + 3.0 / 3f64.log2());
        assert!((exp - hand_exp).abs() < 1e-12);
    }

    #[test]
    fn answer_metric_examples() {
        assert_eq!(exact_match("1200", &["1200"]), 1);
        assert_eq!(exact_match("The bats", &["bats"]), 1);
        assert_eq!(exact_match("1200 species", &["1200"]), 0);
        assert_eq!(token_f1("same words", &["same words"]), 1.0);
        assert!((token_f1("1200 species", &["1200"]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1("bats", &["virus"]), 0.0);
        assert_eq!(token_f1("", &["the"]), 1.0);
        assert_eq!(token_f1("", &["bats"]), 0.0);
    }

    #[test]
    fn file_formats() {
        let q = read_qrels("q1 0 d1 2\nq1 d2 1\n\n# c\nq2 0 d3 0\n".as_bytes()).unwrap();
        assert_eq!(q["q1"]["d1"], 2);
        assert_eq!(q["q1"]["d2"], 1);
        assert!(read_qrels("q1 d1\n".as_bytes()).is_err());
        let r = read_run("q1 Q0 b 2 0.5 x\nq1 Q0 a 1 0.9 x\nq2 c\n".as_bytes()).unwrap();
        assert_eq!(r["q1"], ["a", "b"]);
        assert_eq!(r["q2"], ["c"]);
        assert!(read_run("q1 a\nq1 a\n".as_bytes()).is_err());
        let a = read_answers("q1\t1200\nq1\tabout 1200\n".as_bytes()).unwrap();
        assert_eq!(a["q1"].len(), 2);
    }

    #[test]
    fn report_table() {
        let qrels = read_qrels("q1 d1 1\n".as_bytes()).unwrap();
        let run = read_run("q1 d1\nq1 d2\n".as_bytes()).unwrap();
        let rep = evaluate_run(&run, &qrels, &[1, 2], Gain::Linear).unwrap();
        assert_eq!(rep.precision[&1], 1.0);
        assert_eq!(rep.precision[&2], 0.5);
        let text = format_report(Some(&rep), None);
        assert!(text.contains("P@1\t1.0000\n"));
        assert!(text.contains("NDCG@2\t1.0000\n"));
    }

    proptest! {
        #[test]
        fn ideal_ordering_scores_one(grades in proptest::collection::vec(0u32..4, 1..20), k in 1usize..25) {
            let j: BTreeMap<String, u32> = grades.iter().enumerate().map(|(i, g)| (format!("u{i:02}"), *g)).collect();
            let mut ideal: Vec<&String> = j.keys().collect();
            ideal.sort_by(|a, b| j[*b].cmp(&j[*a]).then(a.cmp(b)));
            let v = ndcg_at_k(&ideal, &j, k, Gain::Linear).unwrap();
            if grades.iter().any(|&g| g > 0) {
                prop_assert!((v - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn metrics_are_bounded_and_ignore_tail(
            grades in proptest::collection::vec(0u32..4, 1..20),
            k in 1usize..10,
            seed in 0u64..1000,
        ) {
            let j: BTreeMap<String, u32> = grades.iter().enumerate().map(|(i, g)| (format!("u{i:02}"), *g)).collect();
            let mut ranking: Vec<String> = j.keys().cloned().collect();
            let shift = seed as usize % ranking.len();
            ranking.rotate_left(shift);
            let p = precision_at_k(&ranking, &j, k).unwrap();
            let n = ndcg_at_k(&ranking, &j, k, Gain::Linear).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            if ranking.len() > k + 1 {
                let mut permuted = ranking.clone();
                permuted[k..].reverse();
                prop_assert_eq!(precision_at_k(&permuted, &j, k).unwrap(), p);
                prop_assert_eq!(ndcg_at_k(&permuted, &j, k, Gain::Linear).unwrap(), n);
            }
        }
    }
}
