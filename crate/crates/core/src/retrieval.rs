//! Retriever abstraction, the in-process lexical index and ordered context
//! construction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::text::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
}

/// Top-k result of one query: scores non-increasing, ids unique, at most `k`
/// entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocuments {
    pub entries: Vec<RankedEntry>,
    pub k: usize,
}

impl RankedDocuments {
    pub fn empty(k: usize) -> Self {
        Self { entries: Vec::new(), k }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// Enforces the ranking invariants on a list received in server order:
    /// later duplicates are dropped and the list is cut to `k`. Scores that
    /// increase down the list violate the wire contract.
    pub fn from_server_order(hits: Vec<RankedEntry>, k: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut entries: Vec<RankedEntry> = Vec::with_capacity(k.min(hits.len()));
        for hit in hits {
            if !hit.score.is_finite() {
                return Err(Error::Protocol(format!("non-finite score for `{}`", hit.doc_id)));
            }
            if !seen.insert(hit.doc_id.clone()) {
                log::warn!("dropping duplicate document `{}` from server response", hit.doc_id);
                continue;
            }
            if let Some(prev) = entries.last() {
                if hit.score > prev.score {
                    return Err(Error::Protocol(format!(
                        "server scores increase at `{}` ({} after {})",
                        hit.doc_id, hit.score, prev.score
                    )));
                }
            }
            if entries.len() < k {
                entries.push(hit);
            }
        }
        Ok(Self { entries, k })
    }
}

/// The ordered, deduplicated union of everything retrieved so far.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context {
    pub doc_ids: Vec<String>,
    /// Hop (1-based) that first retrieved the document at the same position.
    pub source_hops: Vec<u32>,
}

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.doc_ids.iter().any(|d| d == id)
    }

    /// Context made of the given ids, all attributed to hop 1. Duplicates
    /// after the first occurrence are dropped.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ctx = Context::new();
        for id in ids {
            let id = id.into();
            if !ctx.contains(&id) {
                ctx.doc_ids.push(id);
                ctx.source_hops.push(1);
            }
        }
        ctx
    }
}

/// Appends `new_docs` in rank order after `previous`, skipping documents that
/// are already present.
pub fn union_contexts(previous: &Context, new_docs: &RankedDocuments, hop: u32) -> Context {
    debug_assert!(hop >= 1);
    let mut out = previous.clone();
    for id in new_docs.doc_ids() {
        if !out.contains(id) {
            out.doc_ids.push(id.into());
            out.source_hops.push(hop);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Lexical,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub backend: Backend,
    pub k_per_hop: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Lexical,
            k_per_hop: 2,
            endpoint: None,
            timeout_ms: 10_000,
            max_retries: 2,
        }
    }
}

impl RetrieverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_per_hop == 0 {
            return Err(Error::validation("k_per_hop", "must be at least 1"));
        }
        match (self.backend, &self.endpoint) {
            (Backend::Remote, None) => {
                Err(Error::validation("endpoint", "required for the remote backend"))
            }
            (Backend::Lexical, Some(_)) => {
                Err(Error::validation("endpoint", "only valid for the remote backend"))
            }
            _ => Ok(()),
        }
    }
}

pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<RankedDocuments>;
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(&self, query: &str, k: usize) -> Result<RankedDocuments> {
        (**self).retrieve(query, k)
    }
}

impl<R: Retriever + ?Sized> Retriever for alloc::boxed::Box<R> {
    fn retrieve(&self, query: &str, k: usize) -> Result<RankedDocuments> {
        (**self).retrieve(query, k)
    }
}

pub fn check_query(query: &str, k: usize) -> Result<()> {
    if query.trim().is_empty() {
        return Err(Error::validation("query", "empty after trimming whitespace"));
    }
    if k == 0 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    Ok(())
}

/// Inverted index over title and text with tf–idf term weighting.
///
/// A document scores `sum over distinct query terms t it contains of
/// idf(t) * (1 + ln tf(t, d))`, with `idf(t) = ln(1 + N / df(t))`. Ties,
/// including all-zero scores, are broken by ascending document id.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    /// Document ids in ascending order; postings refer to positions here.
    ids: Vec<String>,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
}

impl LexicalIndex {
    pub fn new(corpus: &Corpus) -> Self {
        let mut docs: Vec<&Document> = corpus.documents().iter().collect();
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        for (i, d) in docs.iter().enumerate() {
            for (term, tf) in term_counts(d) {
                postings.entry(term).or_default().push((i, tf));
            }
        }
        Self { ids: docs.iter().map(|d| d.id.clone()).collect(), postings }
    }

    pub fn num_docs(&self) -> usize {
        self.ids.len()
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len).max(1);
        libm::log(1.0 + self.ids.len().max(1) as f64 / df as f64)
    }

    /// Score of one document against a query using this index's statistics.
    pub fn score(&self, query: &str, doc: &Document) -> f64 {
        let counts = term_counts(doc);
        distinct_terms(query)
            .iter()
            .filter_map(|t| counts.get(t.as_str()).map(|&tf| self.idf(t) * tf_weight(tf)))
            .sum()
    }

    pub fn search(&self, query: &str, k: usize) -> Result<RankedDocuments> {
        check_query(query, k)?;
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for term in distinct_terms(query) {
            if let Some(list) = self.postings.get(&term) {
                let idf = self.idf(&term);
                for &(doc, tf) in list {
                    *scores.entry(doc).or_insert(0.0) += idf * tf_weight(tf);
                }
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        // Positions are in id order, so a stable sort on score alone keeps
        // the id tie-break.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked.truncate(k);
        if ranked.len() < k {
            let have: BTreeSet<usize> = ranked.iter().map(|r| r.0).collect();
            let fill = (0..self.ids.len()).filter(|i| !have.contains(i)).take(k - ranked.len());
            ranked.extend(fill.map(|i| (i, 0.0)).collect::<Vec<_>>());
        }
        Ok(RankedDocuments {
            entries: ranked
                .into_iter()
                .map(|(i, score)| RankedEntry { doc_id: self.ids[i].clone(), score })
                .collect(),
            k,
        })
    }
}

impl Retriever for LexicalIndex {
    fn retrieve(&self, query: &str, k: usize) -> Result<RankedDocuments> {
        self.search(query, k)
    }
}

fn tf_weight(tf: u32) -> f64 {
    1.0 + libm::log(f64::from(tf))
}

fn distinct_terms(query: &str) -> Vec<String> {
    let set: BTreeSet<String> = tokenize(query).into_iter().collect();
    set.into_iter().collect()
}

fn term_counts(doc: &Document) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokenize(&doc.title).into_iter().chain(tokenize(&doc.text)) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Score of `doc` for `query` using `corpus` for document frequencies.
pub fn lexical_score(index: &LexicalIndex, query: &str, doc: &Document) -> f64 {
    index.score(query, doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc(id: &str, title: &str, text: &str) -> Document {
        Document { id: id.into(), title: title.into(), text: text.into() }
    }

    fn toy() -> Corpus {
        Corpus::new(
            vec![
                doc("c", "Gamma", "gamma rays and apples"),
                doc("a", "Alpha", "alpha particles and pears"),
                doc("b", "Beta", "beta decay and pears"),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn exact_title_ranks_first() {
        let idx = LexicalIndex::new(&toy());
        let r = idx.search("Beta", 1).unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["b"]);
    }

    #[test]
    fn no_overlap_falls_back_to_id_order() {
        let idx = LexicalIndex::new(&toy());
        let r = idx.search("zebra", 3).unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(r.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn equal_scores_tie_break_by_id() {
        let idx = LexicalIndex::new(&toy());
        let r = idx.search("pears", 3).unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(r.entries[0].score, r.entries[1].score);
        assert!(r.entries[1].score > r.entries[2].score);
    }

    #[test]
    fn empty_query_rejected() {
        let idx = LexicalIndex::new(&toy());
        assert!(matches!(idx.search("   ", 2), Err(Error::Validation { field: "query", .. })));
        assert!(idx.search("alpha", 0).is_err());
    }

    #[test]
    fn score_properties() {
        let corpus = toy();
        let idx = LexicalIndex::new(&corpus);
        let a = corpus.document("a").unwrap();
        assert_eq!(idx.score("zebra", a), 0.0);
        assert_eq!(idx.score("alpha alpha ALPHA", a), idx.score("alpha", a));
        let full = doc("x", "", "red blue");
        let part = doc("y", "", "red green");
        assert!(idx.score("red blue", &full) > idx.score("red blue", &part));
    }

    #[test]
    fn union_keeps_first_occurrence() {
        let prev = Context::from_ids(["a", "b"]);
        let new = RankedDocuments {
            entries: vec![
                RankedEntry { doc_id: "b".into(), score: 2.0 },
                RankedEntry { doc_id: "c".into(), score: 1.0 },
            ],
            k: 2,
        };
        let out = union_contexts(&prev, &new, 2);
        assert_eq!(out.doc_ids, ["a", "b", "c"]);
        assert_eq!(out.source_hops, [1, 1, 2]);
        assert_eq!(union_contexts(&Context::new(), &new, 1).doc_ids, ["b", "c"]);
        assert_eq!(union_contexts(&prev, &RankedDocuments::empty(2), 2), prev);
    }

    #[test]
    fn server_order_enforcement() {
        let hit = |id: &str, s: f64| RankedEntry { doc_id: id.into(), score: s };
        let r = RankedDocuments::from_server_order(vec![hit("x", 3.0), hit("y", 2.0), hit("z", 1.0)], 2)
            .unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["x", "y"]);
        let r = RankedDocuments::from_server_order(vec![hit("x", 3.0), hit("x", 2.0), hit("z", 1.0)], 3)
            .unwrap();
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["x", "z"]);
        assert!(RankedDocuments::from_server_order(vec![hit("x", 1.0), hit("y", 2.0)], 3).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = RetrieverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.backend = Backend::Remote;
        assert!(matches!(cfg.validate(), Err(Error::Validation { field: "endpoint", .. })));
        cfg.endpoint = Some("http://localhost:1".into());
        assert!(cfg.validate().is_ok());
        cfg.k_per_hop = 0;
        assert!(cfg.validate().is_err());
    }
}
