//! Documents, questions and the synthetic multi-hop environment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    /// Gold documents in chain order. Treated as a set by the metrics.
    pub gold_doc_ids: Vec<String>,
    pub gold_answer: String,
    pub required_hops: u32,
}

impl Question {
    pub fn gold_set(&self) -> BTreeSet<&str> {
        self.gold_doc_ids.iter().map(String::as_str).collect()
    }
}

/// An immutable collection of documents and the questions asked over them.
///
/// Construction checks referential integrity, so every `Corpus` value
/// satisfies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    questions: Vec<Question>,
    doc_index: BTreeMap<String, usize>,
    question_index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, questions: Vec<Question>) -> Result<Self> {
        let mut doc_index = BTreeMap::new();
        for (i, d) in documents.iter().enumerate() {
            if d.text.trim().is_empty() {
                return Err(Error::Integrity(format!("document `{}` has empty text", d.id)));
            }
            if doc_index.insert(d.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate document id `{}`", d.id)));
            }
        }
        let mut question_index = BTreeMap::new();
        for (i, q) in questions.iter().enumerate() {
            if q.gold_doc_ids.is_empty() {
                return Err(Error::Integrity(format!("question `{}` has no gold documents", q.id)));
            }
            if q.required_hops == 0 {
                return Err(Error::Integrity(format!("question `{}` has required_hops = 0", q.id)));
            }
            let mut seen = BTreeSet::new();
            for g in &q.gold_doc_ids {
                if !doc_index.contains_key(g) {
                    return Err(Error::Integrity(format!(
                        "question `{}` references unknown document `{g}`",
                        q.id
                    )));
                }
                if !seen.insert(g.as_str()) {
                    return Err(Error::Integrity(format!(
                        "question `{}` lists gold document `{g}` twice",
                        q.id
                    )));
                }
            }
            if question_index.insert(q.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate question id `{}`", q.id)));
            }
        }
        Ok(Self { documents, questions, doc_index, question_index })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty corpus is valid")
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.documents[i])
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.question_index.get(id).map(|&i| &self.questions[i])
    }

    /// A corpus sharing all documents but only the listed questions, in the
    /// order given.
    pub fn with_questions(&self, ids: &[String]) -> Result<Self> {
        let questions = ids
            .iter()
            .map(|id| {
                self.question(id)
                    .cloned()
                    .ok_or_else(|| Error::Integrity(format!("unknown question `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.documents.clone(), questions)
    }
}

/// Parameters of the synthetic chain environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSpec {
    /// Total entities, each of which gets one document. Entities beyond the
    /// chains are background documents.
    pub num_entities: usize,
    /// One question per chain.
    pub num_chains: usize,
    /// Documents per chain, i.e. hops needed to reach the answer.
    pub chain_length: usize,
    /// Size of the background vocabulary sprinkled through document text.
    pub vocab_size: usize,
    /// Mentions of unrelated entities per document.
    pub distractors_per_doc: usize,
    pub seed: u64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            num_entities: 2400,
            num_chains: 700,
            chain_length: 2,
            vocab_size: 400,
            distractors_per_doc: 3,
            seed: 0,
        }
    }
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_entities", self.num_entities),
            ("num_chains", self.num_chains),
            ("chain_length", self.chain_length),
            ("vocab_size", self.vocab_size),
            ("distractors_per_doc", self.distractors_per_doc),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::validation(field, "must be positive"));
            }
        }
        let chained = self.num_chains.checked_mul(self.chain_length).ok_or_else(|| {
            Error::validation("num_chains", "num_chains * chain_length overflows")
        })?;
        if self.num_entities < chained {
            return Err(Error::validation(
                "num_entities",
                format!("must be at least num_chains * chain_length = {chained}"),
            ));
        }
        // Confusers and distractors are drawn from outside the chain.
        if self.num_entities == chained && self.num_chains < 2 {
            return Err(Error::validation(
                "num_entities",
                "need at least one entity outside the chain",
            ));
        }
        Ok(())
    }
}

const BRIDGE_PHRASES: &[&str] = &["leads to", "points to", "links to"];
const DISTRACTOR_PHRASES: &[&str] = &["appears beside", "is unlike", "is near"];
const QUESTION_TEMPLATES: &[&str] = &[
    "Starting from {E} and ignoring {D}, what answer lies at the end of the trail?",
    "Follow the trail from {E}, not {D}: what answer does it reach?",
    "Which answer is reached when tracing {E} rather than {D}?",
];
/// Words that appear in templates; generated names must avoid them.
const RESERVED: &[&str] = &[
    "answer", "appears", "beside", "ends", "follows", "holds", "ignoring", "leads", "lies",
    "links", "near", "not", "place", "points", "rather", "reach", "reached", "sign", "starting",
    "than", "tracing", "trail", "unlike", "end", "follow",
];

const ONSETS: &[&str] = &[
    "b", "br", "d", "dr", "f", "g", "gr", "k", "kr", "l", "m", "n", "p", "pr", "r", "s", "st",
    "t", "tr", "v", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "k", "m"];

/// Unique pronounceable tokens. Uniqueness is case-insensitive and covers
/// every word the generator emits, so lexical matches are unambiguous.
struct Lexicon {
    used: BTreeSet<String>,
}

impl Lexicon {
    fn new() -> Self {
        let mut used = BTreeSet::new();
        for w in RESERVED.iter().chain(crate::text::STOPWORDS) {
            used.insert((*w).to_string());
        }
        Self { used }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        let mut n = syllables;
        let mut attempts = 0usize;
        loop {
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
                w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
            attempts += 1;
            if attempts.is_multiple_of(64) {
                n += 1;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Builds a seeded synthetic corpus of entity chains.
///
/// Question `i` names the head entity `E1` of chain `i` and a confuser
/// entity. The document of `E_h` says `E_h leads to E_{h+1}` (with varied
/// bridge verbs), the last document holds the answer token, and every
/// document also mentions entities of other chains.
pub fn generate_synthetic_corpus(spec: &ChainSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lex = Lexicon::new();

    let names: Vec<String> =
        (0..spec.num_entities).map(|_| capitalize(&lex.fresh(&mut rng, 3))).collect();
    let vocab: Vec<String> = (0..spec.vocab_size).map(|_| lex.fresh(&mut rng, 2)).collect();
    let answers: Vec<String> = (0..spec.num_chains).map(|_| lex.fresh(&mut rng, 2)).collect();

    // Entity -> document id, shuffled so chain structure does not follow id order.
    let mut doc_numbers: Vec<usize> = (0..spec.num_entities).collect();
    doc_numbers.shuffle(&mut rng);
    let doc_id = |entity: usize| format!("d{:06}", doc_numbers[entity]);

    let l = spec.chain_length;
    let chained = spec.num_chains * l;
    let chain_of = |entity: usize| if entity < chained { Some(entity / l) } else { None };

    let pick_outside = |rng: &mut ChaCha8Rng, chain: Option<usize>| -> usize {
        loop {
            let e = rng.random_range(0..spec.num_entities);
            if chain.is_none() || chain_of(e) != chain {
                return e;
            }
        }
    };

    let mut documents = Vec::with_capacity(spec.num_entities);
    for entity in 0..spec.num_entities {
        let name = &names[entity];
        let chain = chain_of(entity);
        let mut sentences: Vec<String> = Vec::new();
        let fill_a = &vocab[rng.random_range(0..vocab.len())];
        let fill_b = &vocab[rng.random_range(0..vocab.len())];
        sentences.push(format!("{name} is a {fill_a} {fill_b} place."));
        match chain {
            Some(c) => {
                let pos = entity - c * l;
                if pos + 1 < l {
                    let verb = BRIDGE_PHRASES[rng.random_range(0..BRIDGE_PHRASES.len())];
                    sentences.push(format!("{name} {verb} {}.", names[entity + 1]));
                } else {
                    sentences.push(format!("{name} holds the answer {}.", answers[c]));
                }
                if pos > 0 {
                    sentences.push(format!("{name} follows {}.", names[entity - 1]));
                }
            }
            None => {
                let verb = BRIDGE_PHRASES[rng.random_range(0..BRIDGE_PHRASES.len())];
                let other = pick_outside(&mut rng, None);
                sentences.push(format!("{name} {verb} {}.", names[other]));
            }
        }
        for _ in 0..spec.distractors_per_doc {
            let phrase = DISTRACTOR_PHRASES[rng.random_range(0..DISTRACTOR_PHRASES.len())];
            let mut other = pick_outside(&mut rng, chain);
            while other == entity {
                other = pick_outside(&mut rng, chain);
            }
            sentences.push(format!("{name} {phrase} {}.", names[other]));
        }
        sentences.shuffle(&mut rng);
        documents.push((doc_numbers[entity], Document {
            id: doc_id(entity),
            title: name.clone(),
            text: sentences.join(" "),
        }));
    }
    documents.sort_by_key(|(n, _)| *n);
    let documents: Vec<Document> = documents.into_iter().map(|(_, d)| d).collect();

    let mut questions = Vec::with_capacity(spec.num_chains);
    for (c, answer) in answers.iter().enumerate() {
        let head = c * l;
        let confuser = pick_outside(&mut rng, Some(c));
        let template = QUESTION_TEMPLATES[rng.random_range(0..QUESTION_TEMPLATES.len())];
        let text = template.replace("{E}", &names[head]).replace("{D}", &names[confuser]);
        questions.push(Question {
            id: format!("q{c:06}"),
            text,
            gold_doc_ids: (head..head + l).map(&doc_id).collect(),
            gold_answer: answer.clone(),
            required_hops: l as u32,
        });
    }

    Corpus::new(documents, questions)
}

/// Splits the question ids into `num_partitions` disjoint groups whose sizes
/// differ by at most one. Each group is returned sorted.
pub fn partition_questions(
    corpus: &Corpus,
    num_partitions: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if num_partitions == 0 {
        return Err(Error::validation("num_partitions", "must be at least 1"));
    }
    let n = corpus.questions().len();
    if num_partitions > n {
        return Err(Error::validation(
            "num_partitions",
            format!("{num_partitions} partitions requested for {n} questions"),
        ));
    }
    let mut ids: Vec<String> = corpus.questions().iter().map(|q| q.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let base = n / num_partitions;
    let extra = n % num_partitions;
    let mut out = Vec::with_capacity(num_partitions);
    let mut rest = ids.as_slice();
    for p in 0..num_partitions {
        let size = base + usize::from(p < extra);
        let (head, tail) = rest.split_at(size);
        let mut part = head.to_vec();
        part.sort();
        out.push(part);
        rest = tail;
    }
    Ok(out)
}

/// Holds out `test_size` randomly chosen questions. Returns sorted
/// `(train, test)` id lists.
pub fn split_questions(corpus: &Corpus, test_size: usize, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let n = corpus.questions().len();
    if test_size == 0 || test_size >= n {
        return Err(Error::validation(
            "test_size",
            format!("must lie in [1, {}) for {n} questions, got {test_size}", n),
        ));
    }
    let mut ids: Vec<String> = corpus.questions().iter().map(|q| q.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = ids.split_off(test_size);
    let mut test = ids;
    train.sort();
    test.sort();
    Ok((train, test))
}
