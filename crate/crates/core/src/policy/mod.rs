//! Query policies: the model that turns (question, context, prompt) into a
//! search query.
//!
//! [`DeskPolicy`] is a log-linear distribution over proposed candidate
//! queries with exact log-probabilities and gradients. Remote LLM policies
//! implement [`QueryPolicy`] in the `hopforge` crate.

mod candidates;
mod features;
mod loglinear;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::retrieval::Context;
use crate::{Error, Result};

pub use candidates::{propose_candidates, DEFAULT_MAX_CANDIDATES};
pub use features::{FeatureContext, FeatureVector, DEFAULT_FEATURE_DIM};
pub use loglinear::{dot, expected_features, log_softmax, loglinear_logprob, loglinear_logprob_grad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    None,
    FixedFewshot,
    DiverseMember,
}

/// A query-generation prompt. For remote policies `payload` is prompt text;
/// for the desk policy it seeds the proposal perturbation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub kind: PromptKind,
    pub payload: String,
}

impl PromptSpec {
    pub fn unprompted() -> Self {
        Self { id: "none".into(), kind: PromptKind::None, payload: String::new() }
    }

    /// `count` diverse prompts `p0..` with distinct payloads.
    pub fn diverse_set(count: usize) -> Vec<Self> {
        (0..count)
            .map(|i| Self {
                id: format!("p{i}"),
                kind: PromptKind::DiverseMember,
                payload: format!("fewshot-{i}"),
            })
            .collect()
    }
}

/// Checks that prompt ids are unique.
pub fn validate_prompts(prompts: &[PromptSpec]) -> Result<()> {
    if prompts.is_empty() {
        return Err(Error::validation("prompts", "at least one prompt is required"));
    }
    let mut ids: Vec<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::validation("prompts", format!("duplicate prompt id `{}`", w[0])));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySample {
    pub query: String,
    /// Log-probability of the query under the sampling distribution, when the
    /// policy can report one.
    pub logprob: Option<f64>,
    pub prompt_id: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub weights: Vec<f64>,
    pub feature_dim: usize,
    pub version: u64,
}

impl PolicyParameters {
    pub fn zeros(feature_dim: usize) -> Self {
        Self { weights: alloc::vec![0.0; feature_dim], feature_dim, version: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::validation("feature_dim", "must be positive"));
        }
        if self.weights.len() != self.feature_dim {
            return Err(Error::validation(
                "weights",
                format!("length {} does not match feature_dim {}", self.weights.len(), self.feature_dim),
            ));
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("weight {i} is not finite")));
        }
        Ok(())
    }
}

pub trait QueryPolicy: Send + Sync {
    fn sample_query(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<QuerySample>;
}

impl<P: QueryPolicy + ?Sized> QueryPolicy for &P {
    fn sample_query(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<QuerySample> {
        (**self).sample_query(question, context, prompt, temperature, seed)
    }
}

impl<P: QueryPolicy + ?Sized> QueryPolicy for alloc::boxed::Box<P> {
    fn sample_query(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<QuerySample> {
        (**self).sample_query(question, context, prompt, temperature, seed)
    }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::validation("temperature", "must be positive and finite"));
    }
    Ok(())
}

/// Log-linear policy over proposed candidates:
/// `pi(q | x) = softmax_q(theta . phi(x, q) / temperature)`.
#[derive(Debug, Clone)]
pub struct DeskPolicy<'c> {
    corpus: &'c Corpus,
    params: PolicyParameters,
    max_candidates: usize,
}

impl<'c> DeskPolicy<'c> {
    pub fn new(corpus: &'c Corpus, params: PolicyParameters) -> Result<Self> {
        params.validate()?;
        Ok(Self { corpus, params, max_candidates: DEFAULT_MAX_CANDIDATES })
    }

    pub fn with_max_candidates(mut self, max_candidates: usize) -> Self {
        self.max_candidates = max_candidates.max(2);
        self
    }

    pub fn params(&self) -> &PolicyParameters {
        &self.params
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    pub fn max_candidates(&self) -> usize {
        self.max_candidates
    }

    /// Candidates and their log-probabilities for one decision.
    pub fn distribution(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
    ) -> Result<(Vec<String>, Vec<f64>)> {
        check_temperature(temperature)?;
        let candidates = propose_candidates(self.corpus, question, context, prompt, self.max_candidates);
        let fctx = FeatureContext::new(self.corpus, question, context);
        let feats: Vec<FeatureVector> =
            candidates.iter().map(|c| fctx.featurize(c, self.params.feature_dim)).collect();
        let logits: Vec<f64> =
            feats.iter().map(|f| dot(&self.params.weights, f) / temperature).collect();
        let logp = log_softmax(&logits)?;
        Ok((candidates, logp))
    }
}

impl QueryPolicy for DeskPolicy<'_> {
    fn sample_query(
        &self,
        question: &Question,
        context: &Context,
        prompt: &PromptSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<QuerySample> {
        let (candidates, logp) = self.distribution(question, context, prompt, temperature)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = candidates.len() - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += libm::exp(*lp);
            if u < acc {
                pick = i;
                break;
            }
        }
        Ok(QuerySample {
            query: candidates[pick].clone(),
            logprob: Some(logp[pick]),
            prompt_id: prompt.id.clone(),
            temperature,
        })
    }
}

/// First non-empty line of a model completion, trimmed.
pub fn extract_query(completion: &str) -> Option<String> {
    completion.lines().map(str::trim).find(|l| !l.is_empty()).map(String::from)
}
