use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::hash::Fnv64;
use crate::retrieval::Context;
use crate::text::{is_stopword, raw_tokens, tokenize};

pub const DEFAULT_FEATURE_DIM: usize = 1 << 16;

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_map(map: BTreeMap<u32, f64>) -> Self {
        Self { entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect() }
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|(_, v)| v * v).sum())
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }
}

struct DocView {
    tokens: Vec<String>,
    /// The document's title is named in the question.
    anchored: bool,
}

/// Everything the feature map needs about (question, context), computed once
/// per decision and shared by all candidates.
pub struct FeatureContext {
    question: String,
    question_tokens: Vec<String>,
    question_set: BTreeSet<String>,
    docs: Vec<DocView>,
    context_tokens: BTreeSet<String>,
    context_titles: BTreeSet<String>,
}

impl FeatureContext {
    pub fn new(corpus: &Corpus, question: &Question, context: &Context) -> Self {
        let question_tokens = tokenize(&question.text);
        let question_set: BTreeSet<String> = question_tokens.iter().cloned().collect();
        let mut docs = Vec::new();
        let mut context_tokens = BTreeSet::new();
        let mut context_titles = BTreeSet::new();
        for id in &context.doc_ids {
            let Some(doc) = corpus.document(id) else { continue };
            let title = tokenize(&doc.title);
            let anchored = !title.is_empty() && title.iter().all(|t| question_set.contains(t));
            let tokens = tokenize(&doc.text);
            context_tokens.extend(tokens.iter().cloned());
            context_tokens.extend(title.iter().cloned());
            context_titles.extend(title);
            docs.push(DocView { tokens, anchored });
        }
        Self {
            question: question.text.trim().into(),
            question_tokens,
            question_set,
            docs,
            context_tokens,
            context_titles,
        }
    }

    /// Hashed features of a candidate query, scaled to unit L2 norm.
    ///
    /// Per query token (weight `1/n` for `n` distinct tokens): stopword,
    /// question and context membership, whether it names a context document,
    /// capitalization, and the neighbouring words of each occurrence in the
    /// question and in context documents (split by whether that document is
    /// named in the question). Plus a length bucket and a full-question flag.
    pub fn featurize(&self, query: &str, dim: usize) -> FeatureVector {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        let mut add = |key: &str, v: f64| {
            let idx = (Fnv64::new().write_str(key).finish() % dim as u64) as u32;
            *acc.entry(idx).or_insert(0.0) += v;
        };

        let mut seen = BTreeSet::new();
        let tokens: Vec<(String, bool)> = raw_tokens(query)
            .filter_map(|r| {
                let lower = r.to_lowercase();
                let cap = r.chars().next().is_some_and(char::is_uppercase);
                seen.insert(lower.clone()).then_some((lower, cap))
            })
            .collect();
        if tokens.is_empty() {
            add("empty", 1.0);
        } else {
            let n = tokens.len();
            add(&format!("len:{}", n.min(4)), 1.0);
            if query.trim() == self.question {
                add("full", 1.0);
            }
            let w = 1.0 / n as f64;
            for (t, cap) in &tokens {
                if is_stopword(t) {
                    add("stop", w);
                }
                add(if self.question_set.contains(t) { "inq" } else { "notq" }, w);
                if self.context_tokens.contains(t) {
                    add("inctx", w);
                }
                if self.context_titles.contains(t) {
                    add("ctxtitle", w);
                }
                if *cap {
                    add("cap", w);
                }
                for (i, q) in self.question_tokens.iter().enumerate() {
                    if q == t {
                        add(&format!("qp:{}", neighbor(&self.question_tokens, i, -1)), w);
                        add(&format!("qn:{}", neighbor(&self.question_tokens, i, 1)), w);
                    }
                }
                for d in &self.docs {
                    let a = u8::from(d.anchored);
                    for (i, x) in d.tokens.iter().enumerate() {
                        if x == t {
                            let prev = neighbor(&d.tokens, i, -1);
                            add(&format!("cp{a}:{prev}"), w);
                            add(&format!("cn{a}:{}", neighbor(&d.tokens, i, 1)), w);
                            add(&format!("cpp{a}:{} {prev}", neighbor(&d.tokens, i, -2)), w);
                        }
                    }
                }
            }
        }

        let norm = libm::sqrt(acc.values().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            for v in acc.values_mut() {
                *v /= norm;
            }
        }
        FeatureVector::from_map(acc)
    }
}

fn neighbor(tokens: &[String], i: usize, offset: isize) -> &str {
    let j = i as isize + offset;
    if j < 0 {
        "^"
    } else {
        tokens.get(j as usize).map_or("$", String::as_str)
    }
}
