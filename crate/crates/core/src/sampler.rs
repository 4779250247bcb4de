//! Prompt-driven diverse sampling across hops, preference-pair construction
//! and reward-weighted selection of the context carried to the next hop.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::hash::derive_seed;
use crate::metrics::{diversity_stats_of, DiversityStats, OPTIMAL_TOLERANCE};
use crate::policy::{validate_prompts, PromptSpec, QueryPolicy, QuerySample};
use crate::retrieval::{union_contexts, Context, Retriever};
use crate::reward::RewardFn;
use crate::{Error, Result};

/// Runs `n` independent jobs and returns their results in index order.
///
/// Implementations may run jobs concurrently; callers rely only on the
/// returned order, never on completion order.
pub trait Executor {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(job).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSample {
    pub sample: QuerySample,
    pub context_after: Context,
    pub reward: f64,
}

/// All samples for one question at one hop, sharing `context_before`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub question_id: String,
    pub hop: u32,
    pub context_before: Context,
    /// In prompt order, minus failed samples.
    pub samples: Vec<HopSample>,
    pub failures: usize,
}

impl HopRecord {
    pub fn rewards(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reward).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub question_id: String,
    pub hop: u32,
    pub context_before: Context,
    pub chosen: QuerySample,
    pub rejected: QuerySample,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
}

impl PreferencePair {
    fn sort_key(&self) -> (&str, u32, &str, &str) {
        (&self.question_id, self.hop, &self.chosen.prompt_id, &self.rejected.prompt_id)
    }
}

/// Rewards of one (question, hop) group, kept so summaries can be recomputed
/// from an exported dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGroup {
    pub question_id: String,
    pub hop: u32,
    pub prompt_ids: Vec<String>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSummary {
    pub hop: u32,
    pub active_questions: usize,
    pub samples: usize,
    pub failed_samples: usize,
    pub dropped_questions: usize,
    /// Questions whose every context reached the optimal reward.
    pub terminated_questions: usize,
    pub pairs: usize,
    pub stats: Option<DiversityStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub seed: u64,
    pub prompt_ids: Vec<String>,
    pub num_hops: u32,
    /// Inclusive range of hops whose pairs were kept.
    pub hop_subset: (u32, u32),
    pub temperature: f64,
    pub k_per_hop: usize,
    pub hops: Vec<HopSummary>,
    /// Mean reward of each prompt over all of its samples.
    pub prompt_mean_reward: BTreeMap<String, f64>,
    pub reward_groups: Vec<RewardGroup>,
}

impl SamplingSummary {
    /// Prompt with the highest mean reward; ties go to the smaller id.
    pub fn best_prompt(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (id, &m) in &self.prompt_mean_reward {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((id, m));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Diversity of all kept reward groups, one group per (question, hop).
    pub fn overall_stats(&self) -> Result<DiversityStats> {
        let lo = self.hop_subset.0;
        let hi = self.hop_subset.1;
        let keys: Vec<String> =
            self.reward_groups.iter().map(|g| format!("{}#{}", g.question_id, g.hop)).collect();
        diversity_stats_of(
            self.reward_groups
                .iter()
                .zip(&keys)
                .filter(|(g, _)| g.hop >= lo && g.hop <= hi)
                .map(|(g, k)| (k.as_str(), g.rewards.as_slice())),
        )
    }
}

/// Pairs in canonical order plus the summary of the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub pairs: Vec<PreferencePair>,
    pub summary: SamplingSummary,
}

impl PreferenceDataset {
    pub fn canonicalize(&mut self) {
        self.pairs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub num_hops: u32,
    pub k_per_hop: usize,
    pub temperature: f64,
    pub optimal_reward: f64,
    /// Inclusive hop range whose pairs are kept; `None` keeps all hops.
    #[serde(default)]
    pub hop_subset: Option<(u32, u32)>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { num_hops: 2, k_per_hop: 2, temperature: 0.7, optimal_reward: 1.0, hop_subset: None, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_hops == 0 {
            return Err(Error::validation("num_hops", "must be at least 1"));
        }
        if self.k_per_hop == 0 {
            return Err(Error::validation("k_per_hop", "must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation("temperature", "must be positive"));
        }
        if let Some((lo, hi)) = self.hop_subset {
            if lo == 0 || lo > hi || hi > self.num_hops {
                return Err(Error::validation(
                    "hop_subset",
                    format!("{lo}..={hi} is not within 1..={}", self.num_hops),
                ));
            }
        }
        Ok(())
    }

    pub fn hop_range(&self) -> (u32, u32) {
        self.hop_subset.unwrap_or((1, self.num_hops))
    }
}

/// The backends one sampling run talks to.
pub struct Backends<'a> {
    pub policy: &'a dyn QueryPolicy,
    pub retriever: &'a dyn Retriever,
    pub reward: &'a dyn RewardFn,
}

fn sample_seed(seed: u64, question_id: &str, hop: u32, prompt_id: &str) -> u64 {
    derive_seed(seed, &["sample", question_id, &hop.to_string(), prompt_id])
}

/// Samples one query per prompt for a single question, retrieves, and scores
/// the extended context. Transport failures are counted and skipped.
pub fn sample_question_hop(
    question: &Question,
    context_before: &Context,
    prompts: &[PromptSpec],
    backends: &Backends<'_>,
    hop: u32,
    config: &SamplerConfig,
) -> Result<HopRecord> {
    let mut samples = Vec::with_capacity(prompts.len());
    let mut failures = 0;
    for prompt in prompts {
        let seed = sample_seed(config.seed, &question.id, hop, &prompt.id);
        let attempt = (|| {
            let sample =
                backends.policy.sample_query(question, context_before, prompt, config.temperature, seed)?;
            let docs = backends.retriever.retrieve(&sample.query, config.k_per_hop)?;
            let context_after = union_contexts(context_before, &docs, hop);
            let reward = backends.reward.reward(question, &context_after)?.value;
            if !(0.0..=1.0).contains(&reward) {
                return Err(Error::Domain(format!("reward {reward} outside [0, 1]")));
            }
            Ok(HopSample { sample, context_after, reward })
        })();
        match attempt {
            Ok(s) => samples.push(s),
            Err(e) if e.is_transport() => {
                log::warn!(
                    "skipping sample question={} hop={hop} prompt={}: {e}",
                    question.id,
                    prompt.id
                );
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(HopRecord {
        question_id: question.id.clone(),
        hop,
        context_before: context_before.clone(),
        samples,
        failures,
    })
}

/// One hop over all active questions. Questions whose every prompt failed are
/// dropped from the result with a warning.
pub fn run_hop<E: Executor>(
    questions: &[&Question],
    contexts: &BTreeMap<String, Context>,
    prompts: &[PromptSpec],
    backends: &Backends<'_>,
    hop: u32,
    config: &SamplerConfig,
    executor: &E,
) -> Result<Vec<HopRecord>>
{
    validate_prompts(prompts)?;
    let empty = Context::new();
    let results = executor.map(questions.len(), |i| {
        let q = questions[i];
        let ctx = contexts.get(&q.id).unwrap_or(&empty);
        sample_question_hop(q, ctx, prompts, backends, hop, config)
    });
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        let rec = r?;
        if rec.samples.is_empty() {
            log::warn!("dropping question {} at hop {hop}: every prompt failed", rec.question_id);
            continue;
        }
        records.push(rec);
    }
    Ok(records)
}

/// One pair per unordered sample pair with unequal rewards; the higher reward
/// is chosen.
pub fn build_preference_pairs(record: &HopRecord) -> Vec<PreferencePair> {
    let s = &record.samples;
    let mut out = Vec::new();
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            if s[i].reward == s[j].reward {
                continue;
            }
            let (w, l) = if s[i].reward > s[j].reward { (&s[i], &s[j]) } else { (&s[j], &s[i]) };
            out.push(PreferencePair {
                question_id: record.question_id.clone(),
                hop: record.hop,
                context_before: record.context_before.clone(),
                chosen: w.sample.clone(),
                rejected: l.sample.clone(),
                chosen_reward: w.reward,
                rejected_reward: l.reward,
            });
        }
    }
    out
}

/// Index of the sample whose context continues to the next hop, or `None`
/// when every context already reached `optimal_reward`.
///
/// Optimal contexts are filtered out; the rest are drawn with probability
/// proportional to reward, or uniformly when all rewards are zero.
pub fn select_next_index(record: &HopRecord, optimal_reward: f64, seed: u64) -> Option<usize> {
    let open: Vec<usize> = (0..record.samples.len())
        .filter(|&i| record.samples[i].reward < optimal_reward - OPTIMAL_TOLERANCE)
        .collect();
    if open.is_empty() {
        return None;
    }
    let total: f64 = open.iter().map(|&i| record.samples[i].reward).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if total <= 0.0 {
        return Some(open[rng.random_range(0..open.len())]);
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &i in &open {
        acc += record.samples[i].reward;
        if u < acc {
            return Some(i);
        }
    }
    open.iter().rev().copied().find(|&i| record.samples[i].reward > 0.0)
}

pub fn select_next_context(record: &HopRecord, optimal_reward: f64, seed: u64) -> Option<Context> {
    select_next_index(record, optimal_reward, seed).map(|i| record.samples[i].context_after.clone())
}

/// Full multi-hop sampling run over every question in `corpus`.
pub fn run_sampling<E: Executor>(
    corpus: &Corpus,
    prompts: &[PromptSpec],
    backends: &Backends<'_>,
    config: &SamplerConfig,
    executor: &E,
) -> Result<PreferenceDataset>
{
    config.validate()?;
    validate_prompts(prompts)?;
    let (lo, hi) = config.hop_range();

    let mut active: Vec<&Question> = corpus.questions().iter().collect();
    let mut contexts: BTreeMap<String, Context> = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut hops = Vec::new();
    let mut groups = Vec::new();
    let mut prompt_totals: BTreeMap<String, (f64, usize)> = BTreeMap::new();

    // Hops after the kept range cannot contribute pairs.
    for hop in 1..=hi {
        let records = run_hop(&active, &contexts, prompts, backends, hop, config, executor)?;
        let keep = hop >= lo;
        let mut summary = HopSummary {
            hop,
            active_questions: active.len(),
            samples: records.iter().map(|r| r.samples.len()).sum(),
            failed_samples: records.iter().map(|r| r.failures).sum(),
            dropped_questions: active.len() - records.len(),
            terminated_questions: 0,
            pairs: 0,
            stats: None,
        };
        let mut hop_groups = Vec::with_capacity(records.len());
        let mut next_contexts = BTreeMap::new();
        for rec in &records {
            for s in &rec.samples {
                let t = prompt_totals.entry(s.sample.prompt_id.clone()).or_insert((0.0, 0));
                t.0 += s.reward;
                t.1 += 1;
            }
            if keep {
                let built = build_preference_pairs(rec);
                summary.pairs += built.len();
                pairs.extend(built);
            }
            hop_groups.push(RewardGroup {
                question_id: rec.question_id.clone(),
                hop,
                prompt_ids: rec.samples.iter().map(|s| s.sample.prompt_id.clone()).collect(),
                rewards: rec.rewards(),
            });
            let seed = derive_seed(config.seed, &["select", &rec.question_id, &hop.to_string()]);
            match select_next_context(rec, config.optimal_reward, seed) {
                Some(ctx) => {
                    next_contexts.insert(rec.question_id.clone(), ctx);
                }
                None => summary.terminated_questions += 1,
            }
        }
        if !hop_groups.is_empty() {
            summary.stats = Some(diversity_stats_of(
                hop_groups.iter().map(|g| (g.question_id.as_str(), g.rewards.as_slice())),
            )?);
        }
        groups.extend(hop_groups);
        hops.push(summary);
        active.retain(|q| next_contexts.contains_key(&q.id));
        contexts = next_contexts;
    }

    let mut dataset = PreferenceDataset {
        pairs,
        summary: SamplingSummary {
            seed: config.seed,
            prompt_ids: prompts.iter().map(|p| p.id.clone()).collect(),
            num_hops: config.num_hops,
            hop_subset: (lo, hi),
            temperature: config.temperature,
            k_per_hop: config.k_per_hop,
            hops,
            prompt_mean_reward: prompt_totals
                .into_iter()
                .map(|(id, (sum, n))| (id, sum / n as f64))
                .collect(),
            reward_groups: groups,
        },
    };
    dataset.canonicalize();
    Ok(dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyAuditReport {
    /// Fraction of cases where the lower-reward first-hop context ends with a
    /// strictly higher reward after the second hop.
    pub fraction: f64,
    pub num_cases: usize,
    pub reversals: usize,
    pub questions_examined: usize,
}

/// Checks whether a worse first hop ever ends better after two hops.
///
/// First-hop contexts come from the prompted `sampling_policy`; each chosen
/// pair of reward-distinct contexts is then extended by one query from
/// `rollout_policy` with no prompt.
#[allow(clippy::too_many_arguments)]
pub fn greedy_audit(
    corpus: &Corpus,
    prompts: &[PromptSpec],
    sampling_policy: &dyn QueryPolicy,
    rollout_policy: &dyn QueryPolicy,
    retriever: &dyn Retriever,
    reward: &dyn RewardFn,
    num_questions: usize,
    config: &SamplerConfig,
) -> Result<GreedyAuditReport> {
    validate_prompts(prompts)?;
    if config.num_hops < 2 {
        return Err(Error::validation("num_hops", "the greedy audit needs at least two hops"));
    }
    let mut questions: Vec<&Question> = corpus.questions().iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["audit"]));
    questions.shuffle(&mut rng);
    questions.truncate(num_questions);
    questions.sort_by(|a, b| a.id.cmp(&b.id));

    let backends = Backends { policy: sampling_policy, retriever, reward };
    let unprompted = PromptSpec::unprompted();
    let mut cases = 0;
    let mut reversals = 0;
    for q in &questions {
        let rec = sample_question_hop(q, &Context::new(), prompts, &backends, 1, config)?;
        let distinct: Vec<(usize, usize)> = (0..rec.samples.len())
            .flat_map(|i| (i + 1..rec.samples.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| rec.samples[i].reward != rec.samples[j].reward)
            .collect();
        if distinct.is_empty() {
            continue;
        }
        let mut qrng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["audit-pair", &q.id]));
        let (i, j) = distinct[qrng.random_range(0..distinct.len())];
        let (lo, hi) = if rec.samples[i].reward < rec.samples[j].reward { (i, j) } else { (j, i) };
        let mut finals = [0.0; 2];
        for (slot, idx) in [lo, hi].into_iter().enumerate() {
            let ctx = &rec.samples[idx].context_after;
            let seed = derive_seed(config.seed, &["audit-rollout", &q.id, &slot.to_string()]);
            let sample = rollout_policy.sample_query(q, ctx, &unprompted, config.temperature, seed)?;
            let docs = retriever.retrieve(&sample.query, config.k_per_hop)?;
            finals[slot] = reward.reward(q, &union_contexts(ctx, &docs, 2))?.value;
        }
        cases += 1;
        if finals[0] > finals[1] {
            reversals += 1;
        }
    }
    if cases == 0 {
        return Err(Error::Domain(format!(
            "no reward-distinct first-hop context pairs among {} questions",
            questions.len()
        )));
    }
    Ok(GreedyAuditReport {
        fraction: reversals as f64 / cases as f64,
        num_cases: cases,
        reversals,
        questions_examined: questions.len(),
    })
}
