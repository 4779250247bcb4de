use std::collections::HashMap;
use std::sync::RwLock;

use hopforge_core::reward::AnswerCache;

/// In-memory generator answer cache keyed by question and document ids.
///
/// Concurrent writers may race on the same key; the values are equal because
/// generation is deterministic for a fixed key, so the last write wins.
#[derive(Debug, Default)]
pub struct SharedAnswerCache {
    entries: RwLock<HashMap<(String, Vec<String>), String>>,
}

impl SharedAnswerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AnswerCache for SharedAnswerCache {
    fn get(&self, question_id: &str, doc_ids: &[String]) -> Option<String> {
        let map = self.entries.read().ok()?;
        map.get(&(question_id.to_string(), doc_ids.to_vec())).cloned()
    }

    fn put(&self, question_id: &str, doc_ids: &[String], answer: String) {
        if let Ok(mut map) = self.entries.write() {
            map.insert((question_id.to_string(), doc_ids.to_vec()), answer);
        }
    }
}
