//! Tokenization shared by the lexical retriever, the policy features and the
//! answer metrics.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercased alphanumeric runs. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    raw_tokens(text).map(|t| t.to_lowercase()).collect()
}

/// Alphanumeric runs with their original case.
pub fn raw_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// Function words ignored when proposing query fragments.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "how",
    "in", "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "what",
    "when", "where", "which", "who", "whom", "why", "with",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}
