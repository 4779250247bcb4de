//! Text templates sent to remote models. Changing a template changes what
//! the models see, so each carries a version recorded in run manifests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Document};
use crate::retrieval::Context;

pub const QUERY_TEMPLATE_VERSION: &str = "query-v1";
pub const ANSWER_TEMPLATE_VERSION: &str = "answer-v1";

pub const QUERY_INSTRUCTION: &str = "Produce one search query.";
pub const ANSWER_INSTRUCTION: &str = "Base your answers only on the provided context.";

/// Context documents in hop order. Ids missing from the corpus are skipped.
pub fn context_documents<'c>(corpus: &'c Corpus, context: &Context) -> Vec<&'c Document> {
    context.doc_ids.iter().filter_map(|id| corpus.document(id)).collect()
}

/// Query-generation prompt:
///
/// ```text
/// {payload}
///
/// Question: {question}
///
/// Context titles:
/// [1] {title}
///
/// Context texts:
/// [1] {text}
///
/// Produce one search query.
/// Query:
/// ```
///
/// The payload block is omitted when empty; an empty context renders as
/// `(none)` under both headings.
pub fn query_prompt(payload: &str, question: &str, docs: &[&Document]) -> String {
    let mut out = String::new();
    if !payload.trim().is_empty() {
        out.push_str(payload.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(&format!("Question: {question}\n\nContext titles:\n"));
    push_numbered(&mut out, docs.iter().map(|d| d.title.as_str()));
    out.push_str("\nContext texts:\n");
    push_numbered(&mut out, docs.iter().map(|d| d.text.as_str()));
    out.push_str(&format!("\n{QUERY_INSTRUCTION}\nQuery:"));
    out
}

/// Grounded-answer prompt:
///
/// ```text
/// Base your answers only on the provided context.
///
/// Context:
/// [1] {title}: {text}
///
/// Question: {question}
/// Answer:
/// ```
pub fn answer_prompt(question: &str, docs: &[&Document]) -> String {
    let mut out = format!("{ANSWER_INSTRUCTION}\n\nContext:\n");
    let lines: Vec<String> = docs.iter().map(|d| format!("{}: {}", d.title, d.text)).collect();
    push_numbered(&mut out, lines.iter().map(String::as_str));
    out.push_str(&format!("\nQuestion: {question}\nAnswer:"));
    out
}

fn push_numbered<'a>(out: &mut String, items: impl Iterator<Item = &'a str>) {
    let mut any = false;
    for (i, item) in items.enumerate() {
        out.push_str(&format!("[{}] {item}\n", i + 1));
        any = true;
    }
    if !any {
        out.push_str("(none)\n");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_prompt_layout() {
        let d = Document { id: "d".into(), title: "Alpha".into(), text: "Alpha text.".into() };
        let p = query_prompt("Example: q -> a", "Why?", &[&d]);
        assert_eq!(
            p,
            "Example: q -> a\n\nQuestion: Why?\n\nContext titles:\n[1] Alpha\n\nContext texts:\n[1] Alpha text.\n\nProduce one search query.\nQuery:"
        );
        let p = query_prompt("", "Why?", &[]);
        assert_eq!(p, "Question: Why?\n\nContext titles:\n(none)\n\nContext texts:\n(none)\n\nProduce one search query.\nQuery:");
    }

    #[test]
    fn answer_prompt_layout() {
        let p = answer_prompt("Why?", &[]);
        assert_eq!(p, "Base your answers only on the provided context.\n\nContext:\n(none)\n\nQuestion: Why?\nAnswer:");
    }
}
