use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{PromptKind, PromptSpec};
use crate::corpus::{Corpus, Question};
use crate::hash::Fnv64;
use crate::retrieval::Context;
use crate::text::{is_stopword, raw_tokens};

pub const DEFAULT_MAX_CANDIDATES: usize = 32;

/// Candidate queries for one decision.
///
/// The unprompted pool is, in order: the full question, its content tokens,
/// capitalized entity mentions harvested from the context documents, and
/// adjacent content-token bigrams; deduplicated and cut to `max_candidates`.
/// Prompted proposals keep a payload-keyed half of the pool (never fewer than
/// two) and add one payload-keyed reordering of the question's content
/// tokens.
pub fn propose_candidates(
    corpus: &Corpus,
    question: &Question,
    context: &Context,
    prompt: &PromptSpec,
    max_candidates: usize,
) -> Vec<String> {
    let max_candidates = max_candidates.max(2);
    let pool = unprompted_pool(corpus, question, context, max_candidates);
    if prompt.kind == PromptKind::None {
        return pool;
    }

    let mut kept: Vec<String> =
        pool.iter().filter(|c| keyed_bit(&prompt.payload, c)).cloned().collect();
    for c in &pool {
        if kept.len() >= 2 {
            break;
        }
        if !kept.contains(c) {
            kept.push(c.clone());
        }
    }
    let content = content_tokens(&question.text);
    if content.len() >= 2 {
        let mut shuffled: Vec<(u64, &str)> = content
            .iter()
            .map(|t| (Fnv64::new().write_str(&prompt.payload).write_str(t).finish(), *t))
            .collect();
        shuffled.sort();
        let reordered = shuffled.iter().map(|(_, t)| *t).collect::<Vec<_>>().join(" ");
        if !kept.contains(&reordered) {
            kept.push(reordered);
        }
    }
    kept
}

fn keyed_bit(payload: &str, candidate: &str) -> bool {
    Fnv64::new().write_str(payload).write_str(candidate).finish() & 1 == 0
}

fn content_tokens(text: &str) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    raw_tokens(text)
        .filter(|t| !is_stopword(&t.to_lowercase()))
        .filter(|t| seen.insert(t.to_lowercase()))
        .collect()
}

fn unprompted_pool(
    corpus: &Corpus,
    question: &Question,
    context: &Context,
    max_candidates: usize,
) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut push = |c: String, out: &mut Vec<String>| {
        let key = c.to_lowercase();
        if !c.trim().is_empty() && seen.insert(key) {
            out.push(c);
        }
    };

    push(question.text.trim().to_string(), &mut out);
    let content = content_tokens(&question.text);
    for t in &content {
        push((*t).to_string(), &mut out);
    }
    for id in &context.doc_ids {
        let Some(doc) = corpus.document(id) else {
            log::warn!("context document `{id}` is not in the corpus; not harvested");
            continue;
        };
        for t in raw_tokens(&doc.title).chain(raw_tokens(&doc.text)) {
            if t.chars().next().is_some_and(char::is_uppercase) {
                push(t.to_string(), &mut out);
            }
        }
    }
    for w in content.windows(2) {
        push(alloc::format!("{} {}", w[0], w[1]), &mut out);
    }
    // Fall back to truncations of the question when extraction yields
    // fewer than two candidates.
    let words: Vec<&str> = question.text.split_whitespace().collect();
    let mut cut = words.len();
    while out.len() < 2 && cut > 1 {
        cut -= 1;
        push(words[..cut].join(" "), &mut out);
    }
    if out.len() < 2 {
        let base = out.first().cloned().unwrap_or_else(|| "?".into());
        out.push(alloc::format!("{base} ?"));
    }
    out.truncate(max_candidates);
    out
}
