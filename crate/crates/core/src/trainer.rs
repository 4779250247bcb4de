//! Optimization of the log-linear query policy.
//!
//! Training runs in two phases: supervised distillation of the best prompt's
//! queries into the unprompted policy, then preference optimization against
//! the frozen post-distillation snapshot. Both phases use plain mini-batch
//! gradient descent with gradients accumulated in index order, so identical
//! inputs give bit-identical weights.
//!
//! The default learning rate of 0.1 is sized for the sparse, L2-normalized
//! feature space of [`DeskPolicy`]. Large language model fine-tuning commonly
//! uses values near `1e-7`; that scale is only meaningful for dense models
//! with billions of parameters and is not a useful default here.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{partition_questions, Corpus};
use crate::eval::{evaluate_retrieval, EvalConfig, EvalReport};
use crate::hash::derive_seed;
use crate::policy::{
    loglinear_logprob, loglinear_logprob_grad, propose_candidates, DeskPolicy, FeatureContext,
    FeatureVector, PolicyParameters, PromptSpec, DEFAULT_MAX_CANDIDATES,
};
use crate::retrieval::{Context, Retriever};
use crate::reward::RewardFn;
use crate::sampler::{run_sampling, Backends, Executor, PreferenceDataset, PreferencePair, SamplerConfig};
use crate::{Error, Result};

pub type Gradient = BTreeMap<u32, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceObjective {
    /// Squared-margin loss on the log-ratio gap.
    #[default]
    Ipo,
    /// Logistic (Bradley-Terry) loss on the scaled log-ratio gap.
    BradleyTerry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub tau: f64,
    /// Only used by [`PreferenceObjective::BradleyTerry`].
    pub beta: f64,
    pub sft_epochs: u32,
    pub ipo_epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub num_iterations: u32,
    /// Softmax temperature of the policy during training.
    pub temperature: f64,
    pub max_candidates: usize,
    pub objective: PreferenceObjective,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            tau: 0.05,
            beta: 0.1,
            sft_epochs: 1,
            ipo_epochs: 2,
            batch_size: 16,
            seed: 0,
            num_iterations: 1,
            temperature: 1.0,
            max_candidates: DEFAULT_MAX_CANDIDATES,
            objective: PreferenceObjective::Ipo,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be positive and finite, got {v}")))
            }
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be non-negative and finite"));
        }
        positive("tau", self.tau)?;
        positive("beta", self.beta)?;
        positive("temperature", self.temperature)?;
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be positive"));
        }
        if self.num_iterations == 0 {
            return Err(Error::validation("num_iterations", "must be at least 1"));
        }
        if self.max_candidates < 2 {
            return Err(Error::validation("max_candidates", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sft,
    Ipo,
    BradleyTerry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub examples: usize,
    /// Dataset entries that could not be expressed in the unprompted
    /// candidate set.
    pub skipped: usize,
    /// Full-dataset mean loss before training and after each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub params: PolicyParameters,
    /// Frozen snapshot that preference optimization measures against.
    pub reference_params: PolicyParameters,
    /// Mean loss of every mini-batch, in step order across phases.
    pub training_log: Vec<LogEntry>,
    pub phases: Vec<PhaseReport>,
}

impl TrainedPolicy {
    /// A policy that has not been trained yet; its reference is itself.
    pub fn untrained(params: PolicyParameters) -> Self {
        Self { reference_params: params.clone(), params, training_log: Vec::new(), phases: Vec::new() }
    }

    /// Makes the current weights the reference for the next phase.
    pub fn freeze_reference(&mut self) {
        self.reference_params = self.params.clone();
    }
}

/// One supervised target: an index into a candidate feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub features: Vec<FeatureVector>,
    pub target: usize,
}

/// A preference pair expressed over a shared candidate feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub features: Vec<FeatureVector>,
    pub chosen: usize,
    pub rejected: usize,
}

/// Candidate queries and their features for the unprompted policy.
fn unprompted_candidates(
    corpus: &Corpus,
    question_id: &str,
    context: &Context,
    params: &PolicyParameters,
    max_candidates: usize,
) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    let question = corpus
        .question(question_id)
        .ok_or_else(|| Error::Integrity(format!("dataset refers to unknown question `{question_id}`")))?;
    let candidates =
        propose_candidates(corpus, question, context, &PromptSpec::unprompted(), max_candidates);
    let fctx = FeatureContext::new(corpus, question, context);
    let features = candidates.iter().map(|c| fctx.featurize(c, params.feature_dim)).collect();
    Ok((candidates, features))
}

/// Supervised examples from the chosen queries of `prompt_id`, deduplicated
/// by (question, hop, context doc ids, query). Returns the examples and the number of
/// distinct queries that were not in the unprompted candidate set.
pub fn build_sft_examples(
    corpus: &Corpus,
    dataset: &PreferenceDataset,
    prompt_id: &str,
    params: &PolicyParameters,
    max_candidates: usize,
) -> Result<(Vec<SftExample>, usize)> {
    let mut seen: BTreeSet<(&str, u32, &[String], &str)> = BTreeSet::new();
    let mut examples = Vec::new();
    let mut skipped = 0;
    for pair in dataset.pairs.iter().filter(|p| p.chosen.prompt_id == prompt_id) {
        let key = (
            pair.question_id.as_str(),
            pair.hop,
            pair.context_before.doc_ids.as_slice(),
            pair.chosen.query.as_str(),
        );
        if !seen.insert(key) {
            continue;
        }
        let (candidates, features) =
            unprompted_candidates(corpus, &pair.question_id, &pair.context_before, params, max_candidates)?;
        match candidates.iter().position(|c| *c == pair.chosen.query) {
            Some(target) => examples.push(SftExample { features, target }),
            None => skipped += 1,
        }
    }
    Ok((examples, skipped))
}

pub fn pair_example(
    corpus: &Corpus,
    pair: &PreferencePair,
    params: &PolicyParameters,
    max_candidates: usize,
) -> Result<PairExample> {
    let (candidates, features) =
        unprompted_candidates(corpus, &pair.question_id, &pair.context_before, params, max_candidates)?;
    let find = |q: &str| {
        candidates.iter().position(|c| c == q).ok_or_else(|| {
            Error::NotRepresentable(format!("query `{q}` is not an unprompted candidate"))
        })
    };
    let chosen = find(&pair.chosen.query)?;
    let rejected = find(&pair.rejected.query)?;
    if chosen == rejected {
        return Err(Error::NotRepresentable("chosen and rejected queries coincide".into()));
    }
    Ok(PairExample { features, chosen, rejected })
}

/// Representable pairs of `dataset` and the count of skipped ones.
pub fn build_pair_examples(
    corpus: &Corpus,
    dataset: &PreferenceDataset,
    params: &PolicyParameters,
    max_candidates: usize,
) -> Result<(Vec<PairExample>, usize)> {
    let mut examples = Vec::with_capacity(dataset.pairs.len());
    let mut skipped = 0;
    for pair in &dataset.pairs {
        match pair_example(corpus, pair, params, max_candidates) {
            Ok(ex) => examples.push(ex),
            Err(Error::NotRepresentable(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((examples, skipped))
}

/// Negative log-likelihood of the target candidate.
pub fn sft_loss_grad(params: &PolicyParameters, example: &SftExample, temperature: f64) -> Result<(f64, Gradient)> {
    let (lp, mut grad) = loglinear_logprob_grad(params, &example.features, temperature, example.target)?;
    for v in grad.values_mut() {
        *v = -*v;
    }
    Ok((-lp, grad))
}

/// `log pi_theta(y) - log pi_ref(y)` for the chosen and rejected candidates.
fn log_ratio_gap(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    example: &PairExample,
    temperature: f64,
) -> Result<f64> {
    let ratio = |i: usize| -> Result<f64> {
        Ok(loglinear_logprob(params, &example.features, temperature, i)?
            - loglinear_logprob(reference, &example.features, temperature, i)?)
    };
    Ok(ratio(example.chosen)? - ratio(example.rejected)?)
}

/// Gradient of the log-ratio gap. Chosen and rejected share one candidate
/// set, so the normalizers cancel and the gap is linear in the weights.
fn gap_gradient(example: &PairExample, temperature: f64) -> Gradient {
    let mut grad = Gradient::new();
    for &(i, v) in &example.features[example.chosen].entries {
        *grad.entry(i).or_insert(0.0) += v / temperature;
    }
    for &(i, v) in &example.features[example.rejected].entries {
        *grad.entry(i).or_insert(0.0) -= v / temperature;
    }
    grad
}

fn check_pair(example: &PairExample) -> Result<()> {
    let n = example.features.len();
    if example.chosen >= n || example.rejected >= n {
        return Err(Error::NotRepresentable(format!(
            "pair indices ({}, {}) outside {n} candidates",
            example.chosen, example.rejected
        )));
    }
    Ok(())
}

/// `(gap - 1/(2 tau))^2` where `gap` is the chosen-minus-rejected log-ratio.
pub fn ipo_pair_loss(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    example: &PairExample,
    tau: f64,
    temperature: f64,
) -> Result<f64> {
    check_pair(example)?;
    let d = log_ratio_gap(params, reference, example, temperature)? - 0.5 / tau;
    Ok(d * d)
}

pub fn ipo_pair_loss_grad(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    example: &PairExample,
    tau: f64,
    temperature: f64,
) -> Result<(f64, Gradient)> {
    check_pair(example)?;
    let d = log_ratio_gap(params, reference, example, temperature)? - 0.5 / tau;
    let mut grad = gap_gradient(example, temperature);
    for v in grad.values_mut() {
        *v *= 2.0 * d;
    }
    Ok((d * d, grad))
}

/// `softplus(-x)`, i.e. `-ln sigmoid(x)`, without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        libm::log1p(libm::exp(-x))
    } else {
        -x + libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(beta * gap)`.
pub fn bt_reference_loss(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    example: &PairExample,
    beta: f64,
    temperature: f64,
) -> Result<f64> {
    check_pair(example)?;
    Ok(neg_log_sigmoid(beta * log_ratio_gap(params, reference, example, temperature)?))
}

pub fn bt_reference_loss_grad(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    example: &PairExample,
    beta: f64,
    temperature: f64,
) -> Result<(f64, Gradient)> {
    check_pair(example)?;
    let x = beta * log_ratio_gap(params, reference, example, temperature)?;
    let scale = -beta * sigmoid(-x);
    let mut grad = gap_gradient(example, temperature);
    for v in grad.values_mut() {
        *v *= scale;
    }
    Ok((neg_log_sigmoid(x), grad))
}

/// Result of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub max_relative_error: f64,
    pub probes: usize,
    /// Coordinate with the largest error.
    pub worst_index: Option<u32>,
}

/// Denominator floor so coordinates with a near-zero gradient are compared
/// absolutely rather than relatively.
pub const GRADIENT_ERROR_FLOOR: f64 = 1e-6;

/// Compares the gradient returned by `loss_fn` with central differences at
/// `num_probes` coordinates. Three of every four probes are drawn from the
/// support of the analytic gradient, the rest uniformly over all weights.
pub fn finite_difference_check<F>(
    params: &PolicyParameters,
    loss_fn: F,
    num_probes: usize,
    epsilon: f64,
    seed: u64,
) -> Result<GradientReport>
where
    F: Fn(&PolicyParameters) -> Result<(f64, Gradient)>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::validation("epsilon", "must lie in (0, 1e-2]"));
    }
    params.validate()?;
    let (_, analytic) = loss_fn(params)?;
    let support: Vec<u32> = analytic.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst = 0.0;
    let mut worst_index = None;
    for p in 0..num_probes {
        let idx = if !support.is_empty() && p % 4 != 3 {
            support[rng.random_range(0..support.len())]
        } else {
            rng.random_range(0..params.feature_dim as u32)
        };
        let i = idx as usize;
        let base = probe.weights[i];
        probe.weights[i] = base + epsilon;
        let up = loss_fn(&probe)?.0;
        probe.weights[i] = base - epsilon;
        let down = loss_fn(&probe)?.0;
        probe.weights[i] = base;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.get(&idx).copied().unwrap_or(0.0);
        let err = libm::fabs(a - numeric) / libm::fabs(a).max(libm::fabs(numeric)).max(GRADIENT_ERROR_FLOOR);
        if err > worst || worst_index.is_none() {
            worst = err;
            worst_index = Some(idx);
        }
    }
    Ok(GradientReport { max_relative_error: worst, probes: num_probes, worst_index })
}

/// Mini-batch gradient descent over `n` examples, accumulating gradients in
/// batch order. `loss_grad(params, i)` evaluates example `i`.
#[allow(clippy::too_many_arguments)]
fn descend<F>(
    policy: &mut TrainedPolicy,
    phase: Phase,
    n: usize,
    epochs: u32,
    config: &TrainerConfig,
    shuffle_label: &str,
    loss_grad: F,
) -> Result<Vec<f64>>
where
    F: Fn(&PolicyParameters, usize) -> Result<(f64, Gradient)>,
{
    let dataset_loss = |params: &PolicyParameters| -> Result<f64> {
        let mut total = 0.0;
        for i in 0..n {
            total += loss_grad(params, i)?.0;
        }
        Ok(total / n as f64)
    };
    let initial = dataset_loss(&policy.params)?;
    let mut epoch_losses = alloc::vec![initial];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let seed = derive_seed(
            config.seed,
            &[shuffle_label, &policy.params.version.to_string(), &epoch.to_string()],
        );
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient::new();
            let mut loss = 0.0;
            for &i in batch {
                let (l, g) = loss_grad(&policy.params, i)?;
                loss += l;
                for (k, v) in g {
                    *grad.entry(k).or_insert(0.0) += v;
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (k, v) in grad {
                policy.params.weights[k as usize] -= scale * v;
            }
            let step = policy.training_log.len() as u64;
            policy.training_log.push(LogEntry { step, loss: loss / batch.len() as f64 });
        }
        let after = dataset_loss(&policy.params)?;
        if !after.is_finite() || after > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(format!(
                "{phase:?} loss rose from {initial} to {after} in epoch {}",
                epoch + 1
            )));
        }
        epoch_losses.push(after);
    }
    if let Some(i) = policy.params.weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::Divergence(format!("weight {i} became non-finite during {phase:?}")));
    }
    Ok(epoch_losses)
}

/// Distills the queries of the best-performing prompt into the unprompted
/// policy, starting from `initial`.
///
/// The returned policy's reference is the post-distillation snapshot, ready
/// for [`train_ipo`].
pub fn sft_context_distillation(
    corpus: &Corpus,
    initial: &PolicyParameters,
    dataset: &PreferenceDataset,
    config: &TrainerConfig,
) -> Result<TrainedPolicy> {
    sft_continue(corpus, TrainedPolicy::untrained(initial.clone()), dataset, config)
}

fn sft_continue(
    corpus: &Corpus,
    mut policy: TrainedPolicy,
    dataset: &PreferenceDataset,
    config: &TrainerConfig,
) -> Result<TrainedPolicy> {
    config.validate()?;
    policy.params.validate()?;
    if dataset.pairs.is_empty() {
        return Err(Error::Domain("preference dataset is empty".into()));
    }
    let best = dataset
        .summary
        .best_prompt()
        .ok_or_else(|| Error::Domain("dataset summary has no prompt rewards".into()))?
        .to_string();
    let (examples, skipped) =
        build_sft_examples(corpus, dataset, &best, &policy.params, config.max_candidates)?;
    if examples.is_empty() {
        return Err(Error::NotRepresentable(format!(
            "none of the {skipped} queries from prompt `{best}` are unprompted candidates"
        )));
    }
    if skipped > 0 {
        log::info!("sft: skipped {skipped} non-representable queries from prompt `{best}`");
    }
    let epoch_losses = descend(&mut policy, Phase::Sft, examples.len(), config.sft_epochs, config, "sft", |p, i| {
        sft_loss_grad(p, &examples[i], config.temperature)
    })?;
    if config.sft_epochs > 0 {
        policy.params.version += 1;
    }
    policy.phases.push(PhaseReport { phase: Phase::Sft, examples: examples.len(), skipped, epoch_losses });
    policy.freeze_reference();
    Ok(policy)
}

/// Preference optimization of `policy.params` against the frozen
/// `policy.reference_params`.
pub fn train_ipo(
    corpus: &Corpus,
    mut policy: TrainedPolicy,
    dataset: &PreferenceDataset,
    config: &TrainerConfig,
) -> Result<TrainedPolicy> {
    config.validate()?;
    policy.params.validate()?;
    policy.reference_params.validate()?;
    if dataset.pairs.is_empty() {
        return Err(Error::Domain("preference dataset is empty".into()));
    }
    let (examples, skipped) = build_pair_examples(corpus, dataset, &policy.params, config.max_candidates)?;
    if examples.is_empty() {
        return Err(Error::NotRepresentable(format!(
            "none of the {skipped} preference pairs are expressible as unprompted candidates"
        )));
    }
    if skipped > 0 {
        log::info!("ipo: skipped {skipped} non-representable pairs");
    }
    let reference = policy.reference_params.clone();
    let (phase, label) = match config.objective {
        PreferenceObjective::Ipo => (Phase::Ipo, "ipo"),
        PreferenceObjective::BradleyTerry => (Phase::BradleyTerry, "bt"),
    };
    let epoch_losses = descend(&mut policy, phase, examples.len(), config.ipo_epochs, config, label, |p, i| {
        match config.objective {
            PreferenceObjective::Ipo => {
                ipo_pair_loss_grad(p, &reference, &examples[i], config.tau, config.temperature)
            }
            PreferenceObjective::BradleyTerry => {
                bt_reference_loss_grad(p, &reference, &examples[i], config.beta, config.temperature)
            }
        }
    })?;
    if config.ipo_epochs > 0 {
        policy.params.version += 1;
    }
    policy.phases.push(PhaseReport { phase, examples: examples.len(), skipped, epoch_losses });
    Ok(policy)
}

/// Distillation followed (unless `skip_preference`) by preference
/// optimization, continuing from `start`.
pub fn train_policy(
    corpus: &Corpus,
    start: TrainedPolicy,
    dataset: &PreferenceDataset,
    config: &TrainerConfig,
    skip_preference: bool,
) -> Result<TrainedPolicy> {
    let sft = sft_continue(corpus, start, dataset, config)?;
    if skip_preference {
        return Ok(sft);
    }
    train_ipo(corpus, sft, dataset, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: u32,
    /// Version of the policy that sampled this iteration's data.
    pub sampled_with_version: u64,
    pub question_ids: Vec<String>,
    pub dataset: PreferenceDataset,
    pub policy: TrainedPolicy,
    pub eval: Option<EvalReport>,
}

/// Held-out questions and the settings used to score each iteration.
#[derive(Debug, Clone, Copy)]
pub struct HeldOut<'a> {
    pub corpus: &'a Corpus,
    pub config: &'a EvalConfig,
}

/// Seed for iteration `iteration`. The first iteration keeps the configured
/// seed so a single iteration reproduces a plain sample-then-train run.
pub fn iteration_seed(seed: u64, iteration: u32) -> u64 {
    if iteration <= 1 {
        seed
    } else {
        derive_seed(seed, &["iteration", &iteration.to_string()])
    }
}

/// Splits the questions into `num_iterations` partitions. Iteration `i`
/// samples its partition with the policy from iteration `i - 1`, then
/// distills and preference-trains from that policy. The reference is
/// re-frozen to each iteration's post-distillation snapshot.
#[allow(clippy::too_many_arguments)]
pub fn iterative_training<E: Executor>(
    corpus: &Corpus,
    prompts: &[PromptSpec],
    initial: &PolicyParameters,
    retriever: &dyn Retriever,
    reward: &dyn RewardFn,
    sampler: &SamplerConfig,
    config: &TrainerConfig,
    held_out: Option<HeldOut<'_>>,
    executor: &E,
) -> Result<Vec<IterationResult>> {
    config.validate()?;
    sampler.validate()?;
    let parts = partition_questions(corpus, config.num_iterations as usize, config.seed)?;
    let mut current = TrainedPolicy::untrained(initial.clone());
    let mut results = Vec::with_capacity(parts.len());
    for (i, ids) in parts.into_iter().enumerate() {
        if ids.is_empty() {
            return Err(Error::Domain(format!("partition {} is empty", i + 1)));
        }
        let iteration = i as u32 + 1;
        let subset = corpus.with_questions(&ids)?;
        let sampled_with_version = current.params.version;
        let dataset = {
            let policy = DeskPolicy::new(&subset, current.params.clone())?
                .with_max_candidates(config.max_candidates);
            let backends = Backends { policy: &policy, retriever, reward };
            let cfg = SamplerConfig { seed: iteration_seed(sampler.seed, iteration), ..sampler.clone() };
            run_sampling(&subset, prompts, &backends, &cfg, executor)?
        };
        let iter_config = TrainerConfig { seed: iteration_seed(config.seed, iteration), ..config.clone() };
        current = train_policy(&subset, current, &dataset, &iter_config, false)?;
        let eval = match held_out {
            Some(h) => {
                let policy = DeskPolicy::new(h.corpus, current.params.clone())?
                    .with_max_candidates(config.max_candidates);
                Some(evaluate_retrieval(h.corpus, &policy, retriever, h.config, executor)?)
            }
            None => None,
        };
        results.push(IterationResult {
            iteration,
            sampled_with_version,
            question_ids: ids,
            dataset,
            policy: current.clone(),
            eval,
        });
    }
    Ok(results)
}
