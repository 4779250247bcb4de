//! Retrieval metrics (average precision, recall), answer metrics (exact match,
//! word-level F1) and reward-diversity statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rewards within this distance of 1.0 count as optimal.
pub const OPTIMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub recall: f64,
    pub average_precision: f64,
}

impl RetrievalEval {
    pub fn compute<S: AsRef<str>, G: AsRef<str>>(retrieved: &[S], gold: &[G]) -> Result<Self> {
        Ok(Self {
            recall: recall(retrieved, gold)?,
            average_precision: average_precision(retrieved, gold)?,
        })
    }
}

fn gold_set<G: AsRef<str>>(gold: &[G]) -> Result<BTreeSet<&str>> {
    let set: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    if set.is_empty() {
        return Err(Error::Domain("gold document set is empty".into()));
    }
    Ok(set)
}

/// `AP = (1/R) * sum_k P(k) * rel(k)` over the ranked list, where `R` is the
/// number of gold documents and `P(k)` the precision of the first `k`.
pub fn average_precision<S: AsRef<str>, G: AsRef<str>>(retrieved: &[S], gold: &[G]) -> Result<f64> {
    let gold = gold_set(gold)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in retrieved.iter().enumerate() {
        if gold.contains(d.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len() as f64)
}

/// Fraction of gold documents that were retrieved.
pub fn recall<S: AsRef<str>, G: AsRef<str>>(retrieved: &[S], gold: &[G]) -> Result<f64> {
    let gold = gold_set(gold)?;
    let found: BTreeSet<&str> =
        retrieved.iter().map(AsRef::as_ref).filter(|d| gold.contains(d)).collect();
    Ok(found.len() as f64 / gold.len() as f64)
}

/// Lowercase, drop punctuation, drop the articles `a`/`an`/`the`, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String =
        lowered.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    let words: Vec<&str> = stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect();
    words.join(" ")
}

/// 1.0 when the normalized strings are identical, else 0.0.
pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Harmonic mean of token-multiset precision and recall over normalized
/// answers.
pub fn f1_word(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &gold {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &pred {
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
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    /// Fraction of questions where some sample reached the optimal reward.
    pub gold_rate: f64,
    /// Mean number of distinct reward values per question.
    pub mean_unique_ap: f64,
    /// Mean population standard deviation of rewards per question.
    pub mean_ap_stddev: f64,
    /// Unordered sample pairs with unequal rewards.
    pub num_preference_pairs: usize,
}

/// Diversity of the sampled rewards, one reward sequence per question.
pub fn diversity_stats(per_question: &BTreeMap<String, Vec<f64>>) -> Result<DiversityStats> {
    diversity_stats_of(per_question.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
}

pub fn diversity_stats_of<'a, I>(groups: I) -> Result<DiversityStats>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let mut n = 0usize;
    let mut gold = 0usize;
    let mut unique_sum = 0.0;
    let mut std_sum = 0.0;
    let mut pairs = 0usize;
    for (key, rewards) in groups {
        if rewards.is_empty() {
            return Err(Error::Domain(format!("question `{key}` has no rewards")));
        }
        n += 1;
        if rewards.iter().any(|&r| is_optimal(r)) {
            gold += 1;
        }
        let mut distinct: Vec<f64> = rewards.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        unique_sum += distinct.len() as f64;
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rewards.len() as f64;
        std_sum += libm::sqrt(var);
        for i in 0..rewards.len() {
            for j in i + 1..rewards.len() {
                if rewards[i] != rewards[j] {
                    pairs += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::Domain("no questions to summarize".into()));
    }
    Ok(DiversityStats {
        gold_rate: gold as f64 / n as f64,
        mean_unique_ap: unique_sum / n as f64,
        mean_ap_stddev: std_sum / n as f64,
        num_preference_pairs: pairs,
    })
}

pub fn is_optimal(reward: f64) -> bool {
    reward >= 1.0 - OPTIMAL_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ap_hand_values() {
        let ap = average_precision(&["g1", "x", "g2", "y"], &["g1", "g2"]).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&["g1", "g2", "x"], &["g2", "g1"]).unwrap(), 1.0);
        assert_eq!(average_precision(&["x", "y"], &["g"]).unwrap(), 0.0);
        assert!(average_precision(&["x"], &[] as &[&str]).is_err());
    }

    #[test]
    fn recall_values() {
        assert_eq!(recall(&["a", "c"], &["a", "b"]).unwrap(), 0.5);
        assert_eq!(recall(&["b", "x", "a"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(recall(&[] as &[&str], &["a"]).unwrap(), 0.0);
        assert!(recall(&["a"], &[] as &[&str]).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("The Beatles!"), "beatles");
        assert_eq!(normalize_answer("  a  cat "), "cat");
        assert_eq!(normalize_answer("42"), "42");
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("Paris", "paris."), 1.0);
        assert_eq!(exact_match("Paris, France", "Paris"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_word("the cat sat", "cat sat"), 1.0);
        assert_eq!(f1_word("dog", "cat"), 0.0);
        assert_eq!(f1_word("a b c", "a b c"), 1.0);
        assert_eq!(f1_word("", "cat"), 0.0);
        assert_eq!(f1_word("the", "an"), 1.0);
        // P = 1/2, R = 1/1
        assert!((f1_word("red fox", "fox") - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diversity_example() {
        let mut m = BTreeMap::new();
        m.insert("q1".into(), vec![1.0, 0.5]);
        m.insert("q2".into(), vec![0.5, 0.5]);
        let s = diversity_stats(&m).unwrap();
        assert_eq!(s.gold_rate, 0.5);
        assert_eq!(s.mean_unique_ap, 1.5);
        assert_eq!(s.mean_ap_stddev, 0.125);
        assert_eq!(s.num_preference_pairs, 1);

        let mut m = BTreeMap::new();
        m.insert("q1".into(), vec![1.0]);
        let s = diversity_stats(&m).unwrap();
        assert_eq!((s.gold_rate, s.mean_unique_ap, s.mean_ap_stddev), (1.0, 1.0, 0.0));

        assert!(diversity_stats(&BTreeMap::new()).is_err());
        let mut m = BTreeMap::new();
        m.insert("q".into(), vec![]);
        assert!(diversity_stats(&m).is_err());
    }
}
