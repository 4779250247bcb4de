//! Rewards for retrieved contexts and the comparison between direct
//! (gold-document) and indirect (generator answer) supervision.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::metrics::{average_precision, f1_word};
use crate::prompt::{answer_prompt, context_documents};
use crate::retrieval::Context;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    DirectAp,
    IndirectF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLabel {
    pub value: f64,
    pub kind: RewardKind,
    /// Present exactly for indirect rewards.
    pub generator_answer: Option<String>,
}

pub trait RewardFn: Send + Sync {
    fn reward(&self, question: &Question, context: &Context) -> Result<RewardLabel>;
}

impl<R: RewardFn + ?Sized> RewardFn for &R {
    fn reward(&self, question: &Question, context: &Context) -> Result<RewardLabel> {
        (**self).reward(question, context)
    }
}

impl<R: RewardFn + ?Sized> RewardFn for alloc::boxed::Box<R> {
    fn reward(&self, question: &Question, context: &Context) -> Result<RewardLabel> {
        (**self).reward(question, context)
    }
}

/// Average precision of the context against the question's gold documents.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectAp;

pub fn reward_direct_ap(context: &Context, question: &Question) -> Result<RewardLabel> {
    Ok(RewardLabel {
        value: average_precision(&context.doc_ids, &question.gold_doc_ids)?,
        kind: RewardKind::DirectAp,
        generator_answer: None,
    })
}

impl RewardFn for DirectAp {
    fn reward(&self, question: &Question, context: &Context) -> Result<RewardLabel> {
        reward_direct_ap(context, question)
    }
}

/// Text-in, text-out answer generator.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, prompt: &str) -> Result<String> {
        (**self).generate(prompt)
    }
}

impl<G: Generator + ?Sized> Generator for alloc::boxed::Box<G> {
    fn generate(&self, prompt: &str) -> Result<String> {
        (**self).generate(prompt)
    }
}

/// Memo of generator answers keyed by question id and context doc ids.
/// Implementations must tolerate concurrent use; values are deterministic so
/// the last write may win.
pub trait AnswerCache: Send + Sync {
    fn get(&self, question_id: &str, doc_ids: &[String]) -> Option<String>;
    fn put(&self, question_id: &str, doc_ids: &[String], answer: String);
}

pub fn generate_answer<G: Generator + ?Sized>(
    corpus: &Corpus,
    question: &Question,
    context: &Context,
    generator: &G,
) -> Result<String> {
    let docs = context_documents(corpus, context);
    generator.generate(&answer_prompt(&question.text, &docs))
}

/// Word-level F1 of the generator's answer against the gold answer.
pub struct IndirectF1<'a, G: ?Sized> {
    corpus: &'a Corpus,
    generator: &'a G,
    cache: Option<&'a dyn AnswerCache>,
}

impl<'a, G: Generator + ?Sized> IndirectF1<'a, G> {
    pub fn new(corpus: &'a Corpus, generator: &'a G) -> Self {
        Self { corpus, generator, cache: None }
    }

    pub fn with_cache(mut self, cache: &'a dyn AnswerCache) -> Self {
        self.cache = Some(cache);
        self
    }
}

pub fn reward_indirect_f1<G: Generator + ?Sized>(
    corpus: &Corpus,
    question: &Question,
    context: &Context,
    generator: &G,
) -> Result<RewardLabel> {
    let answer = generate_answer(corpus, question, context, generator)?;
    Ok(f1_label(question, answer))
}

fn f1_label(question: &Question, answer: String) -> RewardLabel {
    RewardLabel {
        value: f1_word(&answer, &question.gold_answer),
        kind: RewardKind::IndirectF1,
        generator_answer: Some(answer),
    }
}

impl<G: Generator + ?Sized> RewardFn for IndirectF1<'_, G> {
    fn reward(&self, question: &Question, context: &Context) -> Result<RewardLabel> {
        if let Some(hit) = self.cache.and_then(|c| c.get(&question.id, &context.doc_ids)) {
            return Ok(f1_label(question, hit));
        }
        let answer = generate_answer(self.corpus, question, context, self.generator)?;
        if let Some(c) = self.cache {
            c.put(&question.id, &context.doc_ids, answer.clone());
        }
        Ok(f1_label(question, answer))
    }
}

/// Both reward values for one sampled query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualReward {
    pub ap: f64,
    pub f1: f64,
}

/// Samples sharing (question, context before the hop), each scored both ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRewardRecord {
    pub question_id: String,
    pub hop: u32,
    pub rewards: Vec<DualReward>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisagreementCounts {
    pub num_pairs: usize,
    pub hard: usize,
    pub soft: usize,
}

impl DisagreementCounts {
    pub fn hard_fraction(&self) -> f64 {
        fraction(self.hard, self.num_pairs)
    }

    pub fn soft_fraction(&self) -> f64 {
        fraction(self.soft, self.num_pairs)
    }
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub num_pairs: usize,
    pub hard_disagree_fraction: f64,
    pub soft_disagree_fraction: f64,
    pub totals: DisagreementCounts,
    pub per_hop: BTreeMap<u32, DisagreementCounts>,
}

/// Compares the preference pairs induced by generator F1 with the AP ranking.
///
/// A pair exists when two samples' F1 differ by more than `min_f1_gap` (0
/// means any strict difference). It is a hard disagreement when AP ranks
/// the pair the other way and a soft one when AP ties.
pub fn disagreement_analysis(records: &[DualRewardRecord], min_f1_gap: f64) -> Result<DisagreementReport> {
    let mut totals = DisagreementCounts::default();
    let mut per_hop: BTreeMap<u32, DisagreementCounts> = BTreeMap::new();
    for rec in records {
        let hop = per_hop.entry(rec.hop).or_default();
        let r = &rec.rewards;
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                let gap = r[i].f1 - r[j].f1;
                if gap == 0.0 || libm::fabs(gap) <= min_f1_gap {
                    continue;
                }
                let (win, lose) = if gap > 0.0 { (r[i], r[j]) } else { (r[j], r[i]) };
                for c in [&mut totals, &mut *hop] {
                    c.num_pairs += 1;
                    if win.ap < lose.ap {
                        c.hard += 1;
                    } else if win.ap == lose.ap {
                        c.soft += 1;
                    }
                }
            }
        }
    }
    if totals.num_pairs == 0 {
        return Err(Error::Domain("no sample pairs are ranked by F1".into()));
    }
    per_hop.retain(|_, c| c.num_pairs > 0);
    Ok(DisagreementReport {
        num_pairs: totals.num_pairs,
        hard_disagree_fraction: totals.hard_fraction(),
        soft_disagree_fraction: totals.soft_fraction(),
        totals,
        per_hop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use alloc::vec;

    fn dual(pairs: &[(f64, f64)], hop: u32) -> DualRewardRecord {
        DualRewardRecord {
            question_id: "q".into(),
            hop,
            rewards: pairs.iter().map(|&(ap, f1)| DualReward { ap, f1 }).collect(),
        }
    }

    #[test]
    fn hard_and_soft() {
        let r = disagreement_analysis(&[dual(&[(1.0, 0.0), (0.0, 1.0)], 1)], 0.0).unwrap();
        assert_eq!((r.num_pairs, r.hard_disagree_fraction, r.soft_disagree_fraction), (1, 1.0, 0.0));
        let r = disagreement_analysis(&[dual(&[(0.5, 1.0), (0.5, 0.0)], 1)], 0.0).unwrap();
        assert_eq!((r.num_pairs, r.hard_disagree_fraction, r.soft_disagree_fraction), (1, 0.0, 1.0));
        assert!(disagreement_analysis(&[dual(&[(1.0, 0.5), (0.0, 0.5)], 1)], 0.0).is_err());
    }

    #[test]
    fn f1_gap_threshold() {
        let rec = dual(&[(1.0, 0.6), (0.0, 0.5), (0.0, 0.0)], 2);
        assert_eq!(disagreement_analysis(core::slice::from_ref(&rec), 0.0).unwrap().num_pairs, 3);
        assert_eq!(disagreement_analysis(&[rec], 0.2).unwrap().num_pairs, 2);
    }

    struct Echo(&'static str);
    impl Generator for Echo {
        fn generate(&self, _prompt: &str) -> Result<String> {
            Ok(self.0.into())
        }
    }

    fn corpus() -> (Corpus, Question) {
        let q = Question {
            id: "q".into(),
            text: "Where?".into(),
            gold_doc_ids: vec!["a".into(), "b".into()],
            gold_answer: "red fox".into(),
            required_hops: 2,
        };
        let docs = vec![
            Document { id: "a".into(), title: "A".into(), text: "alpha".into() },
            Document { id: "b".into(), title: "B".into(), text: "beta".into() },
            Document { id: "x".into(), title: "X".into(), text: "other".into() },
        ];
        (Corpus::new(docs, vec![q.clone()]).unwrap(), q)
    }

    #[test]
    fn direct_reward_values() {
        let (_, q) = corpus();
        assert_eq!(reward_direct_ap(&Context::from_ids(["a", "b"]), &q).unwrap().value, 1.0);
        assert_eq!(reward_direct_ap(&Context::from_ids(["x"]), &q).unwrap().value, 0.0);
        let v = reward_direct_ap(&Context::from_ids(["a", "x", "b"]), &q).unwrap().value;
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn indirect_reward_values() {
        let (corpus, q) = corpus();
        let ctx = Context::new();
        let gold = reward_indirect_f1(&corpus, &q, &ctx, &Echo("Red fox")).unwrap();
        assert_eq!(gold.value, 1.0);
        assert_eq!(gold.generator_answer.as_deref(), Some("Red fox"));
        assert_eq!(reward_indirect_f1(&corpus, &q, &ctx, &Echo("blue")).unwrap().value, 0.0);
        let half = reward_indirect_f1(&corpus, &q, &ctx, &Echo("fox")).unwrap().value;
        assert!((half - 2.0 / 3.0).abs() < 1e-15);
    }
}
