use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Entity, FacetFilter, Triplet};
use crate::analysis::{AnalyzerConfig, QueryAst};
use crate::error::{Error, Result};
use crate::lexical::{Bm25Params, LexicalIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletWeights {
    /// Subject, relation and object.
    pub core: f64,
    /// Aliases, types, subtypes and descriptions of linked entities.
    pub meta: f64,
}

impl Default for TripletWeights {
    fn default() -> Self {
        Self { core: 3.0, meta: 1.0 }
    }
}

impl TripletWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.core.is_finite() && self.meta.is_finite() && self.core > 0.0 && self.meta > 0.0) {
            return Err(Error::Config("triplet field weights must be positive".into()));
        }
        if self.core <= self.meta {
            return Err(Error::Config(format!(
                "core field weight ({}) must exceed metadata field weight ({})",
                self.core, self.meta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TripletField {
    Subject,
    Relation,
    Object,
    Aliases,
    Types,
    Subtypes,
    Descriptions,
}

impl TripletField {
    const ALL: [TripletField; 7] = [
        TripletField::Subject,
        TripletField::Relation,
        TripletField::Object,
        TripletField::Aliases,
        TripletField::Types,
        TripletField::Subtypes,
        TripletField::Descriptions,
    ];

    fn is_core(self) -> bool {
        matches!(self, TripletField::Subject | TripletField::Relation | TripletField::Object)
    }

    fn text(self, t: &Triplet) -> String {
        let entities = || t.subject_entity.iter().chain(t.object_entity.iter());
        let join = |f: &dyn Fn(&Entity) -> String| entities().map(f).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ");
        match self {
            TripletField::Subject => t.subject.clone(),
            TripletField::Relation => t.relation.clone(),
            TripletField::Object => t.object.clone(),
            TripletField::Aliases => join(&|e| e.aliases.join(" ")),
            TripletField::Types => join(&|e| e.entity_type.clone()),
            TripletField::Subtypes => join(&|e| e.entity_subtype.clone()),
            TripletField::Descriptions => join(&|e| e.description.clone()),
        }
    }
}

/// Field-weighted search over triplets, one lexical index per field.
/// A triplet is a unit of a field only when that field has text.
#[derive(Debug, Clone)]
pub struct TripletIndex {
    triplets: Vec<Triplet>,
    ids: Vec<String>,
    fields: Vec<(TripletField, LexicalIndex)>,
    weights: TripletWeights,
    params: Bm25Params,
}

pub(crate) fn triplet_id(i: usize) -> String {
    format!("t{i:07}")
}

impl TripletIndex {
    pub fn build(triplets: Vec<Triplet>, analyzer: AnalyzerConfig, weights: TripletWeights) -> Result<Self> {
        Self::with_params(triplets, analyzer, weights, Bm25Params::default())
    }

    pub fn with_params(
        triplets: Vec<Triplet>,
        analyzer: AnalyzerConfig,
        weights: TripletWeights,
        params: Bm25Params,
    ) -> Result<Self> {
        weights.validate()?;
        params.validate()?;
        for t in &triplets {
            t.validate()?;
        }
        let ids: Vec<String> = (0..triplets.len()).map(triplet_id).collect();
        let mut fields = Vec::with_capacity(TripletField::ALL.len());
        for field in TripletField::ALL {
            let texts: Vec<String> = triplets.iter().map(|t| field.text(t)).collect();
            let units = ids
                .iter()
                .zip(&texts)
                .filter(|(_, text)| !text.trim().is_empty())
                .map(|(id, text)| (id.as_str(), text.as_str()));
            fields.push((field, LexicalIndex::build(units, analyzer.clone())?));
        }
        Ok(Self {
            triplets,
            ids,
            fields,
            weights,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn weights(&self) -> TripletWeights {
        self.weights
    }

    fn ordinal(&self, id: &str) -> usize {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).expect("id produced by this index")
    }

    /// Number of fields of a triplet that currently hold text.
    pub fn indexed_field_count(&self, i: usize) -> usize {
        let id = &self.ids[i];
        self.fields.iter().filter(|(_, idx)| idx.unit_length(id).is_some()).count()
    }

    /// Score of every triplet with at least one matching query term and all
    /// phrase clauses satisfied, before facet filtering.
    fn score_all(&self, query: &QueryAst) -> HashMap<usize, f64> {
        let terms = query.sequence();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for (field, idx) in &self.fields {
            let weight = if field.is_core() { self.weights.core } else { self.weights.meta };
            for hit in idx.keyword_search(&terms, usize::MAX, &self.params) {
                *scores.entry(self.ordinal(&hit.unit_id)).or_insert(0.0) += weight * hit.score;
            }
        }
        for phrase in &query.phrases {
            let mut matched: HashSet<usize> = HashSet::new();
            for (_, idx) in &self.fields {
                for hit in idx.phrase_search(phrase, usize::MAX, &self.params) {
                    matched.insert(self.ordinal(&hit.unit_id));
                }
            }
            scores.retain(|i, _| matched.contains(i));
        }
        scores
    }

    /// Ranked triplets: score, then facet post-filter, then top-k by score
    /// descending with ties in index order.
    pub fn search(&self, query: &QueryAst, facets: &FacetFilter, k: usize) -> Result<Vec<(&Triplet, f64)>> {
        facets.validate()?;
        let mut ranked: Vec<(usize, f64)> = self
            .score_all(query)
            .into_iter()
            .filter(|(i, _)| facets.matches(&self.triplets[*i]))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked.into_iter().map(|(i, s)| (&self.triplets[i], s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{edge_ngrams, normalize, parse_query, tokenize};
    use crate::kg::tests::entity;
    use crate::kg::{FacetField, Provenance, TripletKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triplet(s: &str, r: &str, o: &str, se: Option<Entity>, oe: Option<Entity>) -> Triplet {
        Triplet {
            subject: s.into(),
            relation: r.into(),
            object: o.into(),
            subject_entity: se,
            object_entity: oe,
            provenance: Provenance {
                doc_id: "d".into(),
                para_id: Some("d#0".into()),
                sentence: Some(0),
            },
            kind: TripletKind::Extracted,
        }
    }

    #[test]
    fn weight_configuration() {
        assert!(TripletWeights::default().validate().is_ok());
        assert_eq!(TripletWeights::default(), TripletWeights { core: 3.0, meta: 1.0 });
        let bad = TripletWeights { core: 1.0, meta: 2.0 };
        assert!(matches!(
            TripletIndex::build(vec![], AnalyzerConfig::default(), bad),
            Err(Error::Config(_))
        ));
        assert!(TripletWeights { core: 2.0, meta: 2.0 }.validate().is_err());
    }

    #[test]
    fn unlinked_triplet_indexes_core_fields_only() {
        let idx = TripletIndex::build(
            vec![
                triplet("bats", "host", "viruses", None, None),
                triplet("bats", "host", "viruses", Some(entity("Bat", "Mammal", "Chiroptera")), None),
            ],
            AnalyzerConfig::default(),
            TripletWeights::default(),
        )
        .unwrap();
        assert_eq!(idx.indexed_field_count(0), 3);
        assert_eq!(idx.indexed_field_count(1), 6);
    }

    /// Brute force: each field is an independent BM25 collection over the
    /// triplets whose field text is non-empty, keyword terms matched against
    /// edge n-grams of the field tokens.
    fn oracle_scores(ts: &[Triplet], query: &str, w: TripletWeights) -> Vec<f64> {
        let cfg = AnalyzerConfig::default();
        let terms: Vec<String> = parse_query(query).unwrap().sequence().iter().map(|t| normalize(t, &cfg)).collect();
        let mut out = vec![0.0; ts.len()];
        for field in TripletField::ALL {
            let weight = if field.is_core() { w.core } else { w.meta };
            let docs: Vec<(usize, Vec<String>, usize)> = ts
                .iter()
                .enumerate()
                .map(|(i, t)| (i, field.text(t)))
                .filter(|(_, text)| !text.trim().is_empty())
                .map(|(i, text)| {
                    let toks = tokenize(&text);
                    let len = toks.len();
                    let grams = toks
                        .iter()
                        .map(|t| normalize(&t.term, &cfg))
                        .filter(|t| !t.is_empty())
                        .flat_map(|t| edge_ngrams(&t, &cfg))
                        .collect();
                    (i, grams, len)
                })
                .collect();
            let n = docs.len() as f64;
            let avgdl = docs.iter().map(|d| d.2 as f64).sum::<f64>() / n.max(1.0);
            for (i, grams, len) in &docs {
                let mut s = 0.0;
                for term in &terms {
                    let tf = grams.iter().filter(|g| *g == term).count() as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let df = docs.iter().filter(|d| d.1.contains(term)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    s += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * *len as f64 / avgdl));
                }
                out[*i] += weight * s;
            }
        }
        out
    }

    fn rhinolophus_fixture() -> Vec<Triplet> {
        let bat = |desc: &str| Entity {
            description: desc.into(),
            ..entity("Bat", "Mammal", "Chiroptera")
        };
        let virus = entity("Coronavirus", "Virus", "Betacoronavirus");
        vec![
            triplet("coronaviruses", "circulate in", "bat colonies", Some(virus.clone()), Some(bat("rhinolophus bats roost in caves"))),
            triplet("rhinolophus bats", "harbor", "SARS-related coronaviruses", Some(bat("")), Some(virus.clone())),
            triplet("influenza", "infects", "poultry", None, None),
            triplet("samples", "collected from", "rhinolophus bats", None, Some(bat(""))),
            triplet("bat colonies", "host", "diverse viruses", Some(bat("rhinolophus species")), None),
        ]
    }

    #[test]
    fn core_field_matches_outrank_description_matches() {
        let ts = rhinolophus_fixture();
        let w = TripletWeights::default();
        let idx = TripletIndex::build(ts.clone(), AnalyzerConfig::default(), w).unwrap();
        let q = parse_query("rhinolophus bats").unwrap();
        let got = idx.search(&q, &FacetFilter::new(), 10).unwrap();

        let expected = oracle_scores(&ts, "rhinolophus bats", w);
        for (t, s) in &got {
            let i = ts.iter().position(|x| x == *t).unwrap();
            assert!((s - expected[i]).abs() < 1e-9, "triplet {i}: {s} vs {}", expected[i]);
        }
        let order: Vec<usize> = got.iter().map(|(t, _)| ts.iter().position(|x| x == *t).unwrap()).collect();
        let core_hits = [1usize, 3];
        let description_only = [0usize, 4];
        for c in core_hits {
            for d in description_only {
                let pc = order.iter().position(|&x| x == c).unwrap();
                let pd = order.iter().position(|&x| x == d).unwrap();
                assert!(pc < pd, "core match {c} should precede description match {d}: {order:?}");
            }
        }
        assert!(!order.contains(&2));
    }

    #[test]
    fn phrase_clause_must_match_a_field() {
        let idx = TripletIndex::build(rhinolophus_fixture(), AnalyzerConfig::default(), TripletWeights::default()).unwrap();
        let got = idx.search(&parse_query("\"bats roost\"").unwrap(), &FacetFilter::new(), 10).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0.subject, "coronaviruses");
    }

    #[test]
    fn facet_filter_equals_post_filter_oracle() {
        let types = ["Virus", "Mammal", "Bacterium"];
        let words = ["bats", "virus", "host", "cave", "spike", "receptor", "human", "swine"];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.gen_range(1..25);
            let pick = |rng: &mut ChaCha8Rng| words[rng.gen_range(0..words.len())].to_string();
            let ts: Vec<Triplet> = (0..n)
                .map(|_| {
                    let ent = |rng: &mut ChaCha8Rng| {
                        rng.gen_bool(0.7)
                            .then(|| entity("e", types[rng.gen_range(0..3)], types[rng.gen_range(0..3)]))
                    };
                    let se = ent(&mut rng);
                    let oe = ent(&mut rng);
                    triplet(&pick(&mut rng), &pick(&mut rng), &pick(&mut rng), se, oe)
                })
                .collect();
            let idx = TripletIndex::build(ts, AnalyzerConfig::default(), TripletWeights::default()).unwrap();
            let q = parse_query(&format!("{} {}", pick(&mut rng), pick(&mut rng))).unwrap();
            let mut filter = FacetFilter::new();
            for field in FacetField::ALL {
                if rng.gen_bool(0.4) {
                    filter = filter.with(field, types[rng.gen_range(0..3)]);
                }
            }
            let all = idx.search(&q, &FacetFilter::new(), usize::MAX).unwrap();
            let expected: Vec<_> = all.into_iter().filter(|(t, _)| filter.matches(t)).collect();
            assert_eq!(idx.search(&q, &filter, usize::MAX).unwrap(), expected);
        }
    }
}
