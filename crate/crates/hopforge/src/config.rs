//! Pipeline configuration file (JSON).
//!
//! Every section has defaults, so `{}` is a valid configuration describing
//! the default synthetic 2-hop environment with the lexical retriever and
//! the desk policy. Endpoint fields left empty are filled from the
//! `HOPFORGE_RETRIEVER_URL`, `HOPFORGE_LLM_URL` and `HOPFORGE_GENERATOR_URL`
//! environment variables when the corresponding backend is remote.

use std::path::{Path, PathBuf};

use hopforge_core::corpus::ChainSpec;
use hopforge_core::eval::EvalConfig;
use hopforge_core::policy::{validate_prompts, PromptSpec, DEFAULT_FEATURE_DIM, DEFAULT_MAX_CANDIDATES};
use hopforge_core::retrieval::{Backend, RetrieverConfig};
use hopforge_core::reward::RewardKind;
use hopforge_core::sampler::SamplerConfig;
use hopforge_core::trainer::{PreferenceObjective, TrainerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::http::HttpSettings;

pub const ENV_RETRIEVER_URL: &str = "HOPFORGE_RETRIEVER_URL";
pub const ENV_LLM_URL: &str = "HOPFORGE_LLM_URL";
pub const ENV_GENERATOR_URL: &str = "HOPFORGE_GENERATOR_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Synthetic(ChainSpec),
    Files { documents: PathBuf, questions: PathBuf },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synthetic(ChainSpec::default())
    }
}

/// Held-out questions for evaluation; everything else is training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_questions: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyBackend {
    #[default]
    Desk,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub backend: PolicyBackend,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_tokens: u32,
    pub feature_dim: usize,
    pub max_candidates: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            backend: PolicyBackend::Desk,
            endpoint: None,
            timeout_ms: 30_000,
            max_retries: 2,
            max_tokens: 64,
            feature_dim: DEFAULT_FEATURE_DIM,
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub num_hops: u32,
    pub temperature: f64,
    /// Inclusive `[first, last]` hops whose pairs are kept.
    pub hop_subset: Option<(u32, u32)>,
    pub optimal_reward: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self { num_hops: d.num_hops, temperature: d.temperature, hop_subset: None, optimal_reward: d.optimal_reward }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_tokens: u32,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self { endpoint: None, timeout_ms: 30_000, max_retries: 2, max_tokens: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub kind: RewardKind,
    pub generator: GeneratorSection,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { kind: RewardKind::DirectAp, generator: GeneratorSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub tau: f64,
    pub beta: f64,
    pub sft_epochs: u32,
    pub ipo_epochs: u32,
    pub batch_size: usize,
    pub num_iterations: u32,
    pub temperature: f64,
    pub objective: PreferenceObjective,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainerConfig::default();
        Self {
            learning_rate: d.learning_rate,
            tau: d.tau,
            beta: d.beta,
            sft_epochs: d.sft_epochs,
            ipo_epochs: d.ipo_epochs,
            batch_size: d.batch_size,
            num_iterations: d.num_iterations,
            temperature: d.temperature,
            objective: d.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub temperature: f64,
    /// Also score generator answers on the final contexts.
    pub with_generator: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { temperature: EvalConfig::default().temperature, with_generator: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusSource,
    pub split: Option<SplitSpec>,
    pub retriever: RetrieverConfig,
    pub policy: PolicySection,
    pub prompts: Vec<PromptSpec>,
    pub sampling: SamplingSection,
    pub reward: RewardSection,
    pub trainer: TrainerSection,
    pub eval: EvalSection,
    pub max_in_flight: usize,
    pub retry_backoff_ms: u64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSource::default(),
            split: None,
            retriever: RetrieverConfig::default(),
            policy: PolicySection::default(),
            prompts: PromptSpec::diverse_set(4),
            sampling: SamplingSection::default(),
            reward: RewardSection::default(),
            trainer: TrainerSection::default(),
            eval: EvalSection::default(),
            max_in_flight: HttpSettings::default().max_in_flight,
            retry_backoff_ms: HttpSettings::default().retry_backoff_ms,
            output_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> AppResult<Self> {
        serde_json::from_str(text).map_err(|e| AppError::config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The configuration as recorded in manifests. Where outputs are written
    /// does not affect their content, so the output directory is cleared.
    pub fn recorded(&self) -> Self {
        Self { output_dir: PathBuf::new(), ..self.clone() }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration is always serializable")
    }

    /// Fills empty endpoints of remote backends from `lookup` (normally the
    /// process environment).
    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, lookup: F) {
        if self.retriever.backend == Backend::Remote && self.retriever.endpoint.is_none() {
            self.retriever.endpoint = lookup(ENV_RETRIEVER_URL);
        }
        if self.policy.backend == PolicyBackend::Remote && self.policy.endpoint.is_none() {
            self.policy.endpoint = lookup(ENV_LLM_URL);
        }
        if self.needs_generator() && self.reward.generator.endpoint.is_none() {
            self.reward.generator.endpoint = lookup(ENV_GENERATOR_URL);
        }
    }

    pub fn needs_generator(&self) -> bool {
        self.reward.kind == RewardKind::IndirectF1 || self.eval.with_generator
    }

    pub fn validate(&self) -> AppResult<()> {
        self.retriever.validate()?;
        if self.policy.backend == PolicyBackend::Remote && self.policy.endpoint.is_none() {
            return Err(AppError::config(format!(
                "policy.endpoint is required for the remote policy (or set {ENV_LLM_URL})"
            )));
        }
        if self.needs_generator() && self.reward.generator.endpoint.is_none() {
            return Err(AppError::config(format!(
                "reward.generator.endpoint is required for generator scoring (or set {ENV_GENERATOR_URL})"
            )));
        }
        if self.policy.feature_dim == 0 {
            return Err(AppError::config("policy.feature_dim must be positive"));
        }
        if let CorpusSource::Synthetic(spec) = &self.corpus {
            spec.validate()?;
        }
        if let Some(split) = &self.split {
            if split.test_questions == 0 {
                return Err(AppError::config("split.test_questions must be positive"));
            }
        }
        if !(self.eval.temperature > 0.0 && self.eval.temperature.is_finite()) {
            return Err(AppError::config("eval.temperature must be positive and finite"));
        }
        validate_prompts(&self.prompts)?;
        self.sampler_config().validate()?;
        self.trainer_config().validate()?;
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            num_hops: self.sampling.num_hops,
            k_per_hop: self.retriever.k_per_hop,
            temperature: self.sampling.temperature,
            optimal_reward: self.sampling.optimal_reward,
            hop_subset: self.sampling.hop_subset,
            seed: self.seed,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            learning_rate: t.learning_rate,
            tau: t.tau,
            beta: t.beta,
            sft_epochs: t.sft_epochs,
            ipo_epochs: t.ipo_epochs,
            batch_size: t.batch_size,
            seed: self.seed,
            num_iterations: t.num_iterations,
            temperature: t.temperature,
            max_candidates: self.policy.max_candidates,
            objective: t.objective,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            num_hops: self.sampling.num_hops,
            k_per_hop: self.retriever.k_per_hop,
            temperature: self.eval.temperature,
            seed: self.seed,
        }
    }

    pub fn http_settings(&self, timeout_ms: u64, max_retries: u32) -> HttpSettings {
        HttpSettings { timeout_ms, max_retries, max_in_flight: self.max_in_flight, retry_backoff_ms: self.retry_backoff_ms }
    }
}

/// Parses `--hop-subset` values: `2` keeps only hop 2, `1-2` keeps hops 1
/// through 2.
pub fn parse_hop_subset(text: &str) -> Result<(u32, u32), String> {
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| format!("invalid hop `{s}`: {e}"));
    match text.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let h = parse(text)?;
            Ok((h, h))
        }
    }
}
