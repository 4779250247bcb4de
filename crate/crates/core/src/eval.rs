//! Test-time evaluation: roll a policy through all hops without prompts and
//! measure the retrieved context after each hop.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::hash::derive_seed;
use crate::metrics::{average_precision, exact_match, f1_word, recall};
use crate::policy::{PromptSpec, QueryPolicy};
use crate::retrieval::{union_contexts, Context, Retriever};
use crate::reward::{generate_answer, Generator};
use crate::sampler::Executor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub num_hops: u32,
    pub k_per_hop: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { num_hops: 2, k_per_hop: 2, temperature: 0.7, seed: 0 }
    }
}

/// Mean recall (RE) and average precision (AP) of the contexts after a hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopEval {
    pub hop: u32,
    pub recall: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEval {
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_questions: usize,
    pub per_hop: Vec<HopEval>,
    #[serde(default)]
    pub generator: Option<GeneratorEval>,
}

impl EvalReport {
    pub fn final_recall(&self) -> f64 {
        self.per_hop.last().map_or(0.0, |h| h.recall)
    }

    pub fn recall_at(&self, hop: u32) -> Option<f64> {
        self.per_hop.iter().find(|h| h.hop == hop).map(|h| h.recall)
    }
}

/// A question's context after each hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    pub queries: Vec<String>,
    pub contexts: Vec<Context>,
}

pub fn rollout(
    question: &Question,
    policy: &dyn QueryPolicy,
    retriever: &dyn Retriever,
    config: &EvalConfig,
) -> Result<Trajectory> {
    let prompt = PromptSpec::unprompted();
    let mut ctx = Context::new();
    let mut queries = Vec::new();
    let mut contexts = Vec::new();
    for hop in 1..=config.num_hops {
        let seed = derive_seed(config.seed, &["eval", &question.id, &hop.to_string()]);
        let sample = policy.sample_query(question, &ctx, &prompt, config.temperature, seed)?;
        let docs = retriever.retrieve(&sample.query, config.k_per_hop)?;
        ctx = union_contexts(&ctx, &docs, hop);
        queries.push(sample.query);
        contexts.push(ctx.clone());
    }
    Ok(Trajectory { question_id: question.id.clone(), queries, contexts })
}

pub fn rollout_all<E: Executor>(
    corpus: &Corpus,
    policy: &dyn QueryPolicy,
    retriever: &dyn Retriever,
    config: &EvalConfig,
    executor: &E,
) -> Result<Vec<Trajectory>> {
    let qs = corpus.questions();
    executor.map(qs.len(), |i| rollout(&qs[i], policy, retriever, config)).into_iter().collect()
}

/// Per-hop RE/AP over every question in `corpus`.
pub fn evaluate_retrieval<E: Executor>(
    corpus: &Corpus,
    policy: &dyn QueryPolicy,
    retriever: &dyn Retriever,
    config: &EvalConfig,
    executor: &E,
) -> Result<EvalReport> {
    let trajectories = rollout_all(corpus, policy, retriever, config, executor)?;
    summarize(corpus, &trajectories, config.num_hops)
}

pub fn summarize(corpus: &Corpus, trajectories: &[Trajectory], num_hops: u32) -> Result<EvalReport> {
    if trajectories.is_empty() {
        return Err(Error::Domain("no questions to evaluate".into()));
    }
    let n = trajectories.len() as f64;
    let mut per_hop = Vec::with_capacity(num_hops as usize);
    for h in 0..num_hops as usize {
        let mut re = 0.0;
        let mut ap = 0.0;
        for t in trajectories {
            let q = corpus
                .question(&t.question_id)
                .ok_or_else(|| Error::Integrity(alloc::format!("unknown question `{}`", t.question_id)))?;
            let ctx = &t.contexts[h];
            re += recall(&ctx.doc_ids, &q.gold_doc_ids)?;
            ap += average_precision(&ctx.doc_ids, &q.gold_doc_ids)?;
        }
        per_hop.push(HopEval { hop: h as u32 + 1, recall: re / n, average_precision: ap / n });
    }
    Ok(EvalReport { num_questions: trajectories.len(), per_hop, generator: None })
}

/// Exact match and F1 of generator answers grounded in the final contexts.
pub fn evaluate_generation<G: Generator + ?Sized, E: Executor>(
    corpus: &Corpus,
    trajectories: &[Trajectory],
    generator: &G,
    executor: &E,
) -> Result<GeneratorEval> {
    if trajectories.is_empty() {
        return Err(Error::Domain("no questions to evaluate".into()));
    }
    let scores = executor.map(trajectories.len(), |i| -> Result<(f64, f64)> {
        let t = &trajectories[i];
        let q = corpus
            .question(&t.question_id)
            .ok_or_else(|| Error::Integrity(alloc::format!("unknown question `{}`", t.question_id)))?;
        let last = t.contexts.last().cloned().unwrap_or_default();
        let answer = generate_answer(corpus, q, &last, generator)?;
        Ok((exact_match(&answer, &q.gold_answer), f1_word(&answer, &q.gold_answer)))
    });
    let mut em = 0.0;
    let mut f1 = 0.0;
    for s in scores {
        let (e, f) = s?;
        em += e;
        f1 += f;
    }
    let n = trajectories.len() as f64;
    Ok(GeneratorEval { exact_match: em / n, f1: f1 / n })
}
