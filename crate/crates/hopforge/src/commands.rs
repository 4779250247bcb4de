//! The pipeline steps behind each CLI subcommand. They return structured
//! results so they can be driven from tests as well as from `main`.

use std::path::{Path, PathBuf};

use hopforge_core::corpus::{generate_synthetic_corpus, split_questions, ChainSpec, Corpus};
use hopforge_core::eval::{evaluate_generation, rollout_all, summarize, EvalReport};
use hopforge_core::metrics::DiversityStats;
use hopforge_core::policy::{DeskPolicy, PolicyParameters, QueryPolicy};
use hopforge_core::prompt::{ANSWER_TEMPLATE_VERSION, QUERY_TEMPLATE_VERSION};
use hopforge_core::retrieval::{Backend, LexicalIndex, Retriever};
use hopforge_core::reward::{DirectAp, IndirectF1, RewardFn, RewardKind};
use hopforge_core::sampler::{greedy_audit, run_sampling, Backends, GreedyAuditReport, PreferenceDataset};
use hopforge_core::trainer::{iterative_training, train_policy, HeldOut, PhaseReport, TrainedPolicy};
use serde::{Deserialize, Serialize};

use crate::cache::SharedAnswerCache;
use crate::config::{CorpusSource, PipelineConfig, PolicyBackend};
use crate::error::{AppError, AppResult};
use crate::exec::ThreadPool;
use crate::files::{
    corpus_hash, dataset_bytes, file_sha256, load_corpus, read_checkpoint, read_dataset, sha256_hex,
    source_date, training_log_csv, write_bytes, write_checkpoint, write_corpus, write_dataset, write_json,
    Checkpoint, DatasetManifest, CODE_VERSION, DATASET_FORMAT,
};
use crate::http::{JsonClient, RemoteGenerator, RemotePolicy, RemoteRetriever};

pub const ANSWER_NORMALIZATION: &str = "lowercase; drop punctuation; drop articles a/an/the; collapse whitespace";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    All,
}

/// A loaded corpus with its train/test views and remote backends.
pub struct Workspace {
    pub config: PipelineConfig,
    pub corpus: Corpus,
    pub corpus_hash: String,
    pub train: Corpus,
    pub test: Corpus,
    retriever: Box<dyn Retriever>,
    generator: Option<RemoteGenerator>,
    cache: SharedAnswerCache,
    pool: ThreadPool,
}

impl Workspace {
    /// Validates `config` before doing any work, then loads the corpus.
    pub fn open(config: PipelineConfig, workers: usize) -> AppResult<Self> {
        config.validate()?;
        let corpus = match &config.corpus {
            CorpusSource::Synthetic(spec) => generate_synthetic_corpus(spec)?,
            CorpusSource::Files { documents, questions } => load_corpus(documents, questions)?,
        };
        let (train, test) = match &config.split {
            Some(split) => {
                let (train_ids, test_ids) = split_questions(&corpus, split.test_questions, split.seed)?;
                (corpus.with_questions(&train_ids)?, corpus.with_questions(&test_ids)?)
            }
            None => (corpus.clone(), corpus.clone()),
        };
        let retriever: Box<dyn Retriever> = match config.retriever.backend {
            Backend::Lexical => Box::new(LexicalIndex::new(&corpus)),
            Backend::Remote => {
                let endpoint = config.retriever.endpoint.as_deref().expect("validated");
                let settings = config.http_settings(config.retriever.timeout_ms, config.retriever.max_retries);
                Box::new(RemoteRetriever::new(JsonClient::new(endpoint, settings)))
            }
        };
        let generator = config.reward.generator.endpoint.as_deref().map(|endpoint| {
            let g = &config.reward.generator;
            RemoteGenerator::new(JsonClient::new(endpoint, config.http_settings(g.timeout_ms, g.max_retries)), g.max_tokens)
        });
        Ok(Self {
            corpus_hash: corpus_hash(&corpus),
            corpus,
            train,
            test,
            retriever,
            generator,
            cache: SharedAnswerCache::new(),
            pool: ThreadPool::new(workers),
            config,
        })
    }

    pub fn split(&self, split: Split) -> &Corpus {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::All => &self.corpus,
        }
    }

    pub fn retriever(&self) -> &dyn Retriever {
        self.retriever.as_ref()
    }

    pub fn executor(&self) -> &ThreadPool {
        &self.pool
    }

    pub fn initial_params(&self) -> PolicyParameters {
        PolicyParameters::zeros(self.config.policy.feature_dim)
    }

    /// The configured query policy over `corpus`, using `params` for the
    /// desk backend.
    pub fn policy<'a>(&'a self, corpus: &'a Corpus, params: &PolicyParameters) -> AppResult<Box<dyn QueryPolicy + 'a>> {
        let p = &self.config.policy;
        Ok(match p.backend {
            PolicyBackend::Desk => {
                Box::new(DeskPolicy::new(corpus, params.clone())?.with_max_candidates(p.max_candidates))
            }
            PolicyBackend::Remote => {
                let endpoint = p.endpoint.as_deref().expect("validated");
                let client = JsonClient::new(endpoint, self.config.http_settings(p.timeout_ms, p.max_retries));
                Box::new(RemotePolicy::new(client, corpus, p.max_tokens))
            }
        })
    }

    pub fn reward<'a>(&'a self, corpus: &'a Corpus) -> Box<dyn RewardFn + 'a> {
        match (self.config.reward.kind, &self.generator) {
            (RewardKind::IndirectF1, Some(g)) => Box::new(IndirectF1::new(corpus, g).with_cache(&self.cache)),
            (RewardKind::IndirectF1, None) => unreachable!("validated: generator endpoint present"),
            (RewardKind::DirectAp, _) => Box::new(DirectAp),
        }
    }

    /// Parameters from `checkpoint`, or the untrained policy. Checkpoints
    /// trained on a different corpus are refused.
    pub fn load_params(&self, checkpoint: Option<&Path>) -> AppResult<(PolicyParameters, Option<String>)> {
        let Some(path) = checkpoint else {
            return Ok((self.initial_params(), None));
        };
        if self.config.policy.backend == PolicyBackend::Remote {
            return Err(AppError::config("checkpoints only apply to the desk policy backend"));
        }
        let ck = read_checkpoint(path)?;
        if ck.corpus_hash != self.corpus_hash {
            return Err(AppError::integrity(format!(
                "checkpoint {} was trained on corpus {} but the configured corpus is {}",
                path.display(),
                ck.corpus_hash,
                self.corpus_hash
            )));
        }
        Ok((ck.params()?, Some(file_sha256(path)?)))
    }

    fn manifest(
        &self,
        dataset: &PreferenceDataset,
        bytes: &[u8],
        corpus: &Corpus,
        policy_version: u64,
        policy_checkpoint_sha256: Option<String>,
        seed: u64,
    ) -> DatasetManifest {
        DatasetManifest {
            format: DATASET_FORMAT.into(),
            code_version: CODE_VERSION.into(),
            created_at: source_date(),
            seed,
            corpus_hash: self.corpus_hash.clone(),
            dataset_sha256: sha256_hex(bytes),
            num_pairs: dataset.pairs.len(),
            num_questions: corpus.questions().len(),
            policy_version,
            policy_checkpoint_sha256,
            query_template_version: QUERY_TEMPLATE_VERSION.into(),
            answer_template_version: ANSWER_TEMPLATE_VERSION.into(),
            answer_normalization: ANSWER_NORMALIZATION.into(),
            best_prompt: dataset.summary.best_prompt().map(str::to_string),
            overall_stats: dataset.summary.overall_stats().ok(),
            sampling: dataset.summary.clone(),
            config: self.config.recorded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub documents: PathBuf,
    pub questions: PathBuf,
    pub corpus_hash: String,
    pub num_documents: usize,
    pub num_questions: usize,
}

pub fn gen_corpus(spec: &ChainSpec, out_dir: &Path) -> AppResult<CorpusFiles> {
    let corpus = generate_synthetic_corpus(spec)?;
    let documents = out_dir.join("documents.jsonl");
    let questions = out_dir.join("questions.jsonl");
    write_corpus(&corpus, &documents, &questions)?;
    Ok(CorpusFiles {
        documents,
        questions,
        corpus_hash: corpus_hash(&corpus),
        num_documents: corpus.documents().len(),
        num_questions: corpus.questions().len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutput {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub dataset_sha256: String,
    pub manifest_sha256: String,
    pub num_pairs: usize,
    pub stats: Option<DiversityStats>,
}

/// Samples preference pairs over the training split and writes
/// `out` plus its manifest.
pub fn sample(ws: &Workspace, policy_checkpoint: Option<&Path>, out: &Path) -> AppResult<SampleOutput> {
    let (params, ck_hash) = ws.load_params(policy_checkpoint)?;
    let corpus = &ws.train;
    let policy = ws.policy(corpus, &params)?;
    let reward = ws.reward(corpus);
    let backends = Backends { policy: policy.as_ref(), retriever: ws.retriever(), reward: reward.as_ref() };
    let cfg = ws.config.sampler_config();
    let dataset = run_sampling(corpus, &ws.config.prompts, &backends, &cfg, ws.executor())?;
    let bytes = dataset_bytes(&dataset);
    let manifest = ws.manifest(&dataset, &bytes, corpus, params.version, ck_hash, cfg.seed);
    let manifest_sha256 = write_dataset(out, &bytes, &manifest)?;
    Ok(SampleOutput {
        dataset: out.to_path_buf(),
        manifest: crate::files::manifest_path(out),
        dataset_sha256: manifest.dataset_sha256.clone(),
        manifest_sha256,
        num_pairs: manifest.num_pairs,
        stats: manifest.overall_stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub training_log: PathBuf,
    pub version: u64,
    pub phases: Vec<PhaseReport>,
}

/// Distillation then (unless `skip_ipo`) preference optimization on a
/// dataset written by [`sample`].
pub fn train(
    ws: &Workspace,
    dataset_path: &Path,
    init: Option<&Path>,
    skip_ipo: bool,
    checkpoint_out: &Path,
    log_out: &Path,
) -> AppResult<TrainOutput> {
    if ws.config.policy.backend != PolicyBackend::Desk {
        return Err(AppError::config("training requires the desk policy backend"));
    }
    let loaded = read_dataset(dataset_path)?;
    if loaded.manifest.corpus_hash != ws.corpus_hash {
        return Err(AppError::integrity(format!(
            "dataset {} was sampled from corpus {} but the configured corpus is {}",
            dataset_path.display(),
            loaded.manifest.corpus_hash,
            ws.corpus_hash
        )));
    }
    let (params, _) = ws.load_params(init)?;
    let cfg = ws.config.trainer_config();
    let trained = if cfg.sft_epochs == 0 && (skip_ipo || cfg.ipo_epochs == 0) {
        TrainedPolicy::untrained(params)
    } else {
        train_policy(&ws.train, TrainedPolicy::untrained(params), &loaded.dataset, &cfg, skip_ipo)?
    };
    let ck = Checkpoint::new(
        &trained.params,
        ws.corpus_hash.clone(),
        Some(loaded.manifest_sha256),
        cfg,
        skip_ipo,
        trained.phases.clone(),
    );
    let checkpoint_sha256 = write_checkpoint(checkpoint_out, &ck)?;
    write_bytes(log_out, training_log_csv(&trained.training_log).as_bytes())?;
    Ok(TrainOutput {
        checkpoint: checkpoint_out.to_path_buf(),
        checkpoint_sha256,
        training_log: log_out.to_path_buf(),
        version: trained.params.version,
        phases: trained.phases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub corpus_hash: String,
    pub checkpoint_sha256: Option<String>,
    pub policy_version: u64,
    pub split: Split,
    #[serde(flatten)]
    pub report: EvalReport,
}

impl EvalOutput {
    /// Per-hop table with recall (RE) and average precision (AP) columns.
    pub fn table(&self) -> String {
        let mut out = format!("split={:?} questions={} policy_version={}\n", self.split, self.report.num_questions, self.policy_version)
            .to_lowercase();
        out.push_str("hop        RE        AP\n");
        for h in &self.report.per_hop {
            out.push_str(&format!("{:>3}  {:>8.2}  {:>8.2}\n", h.hop, 100.0 * h.recall, 100.0 * h.average_precision));
        }
        if let Some(g) = &self.report.generator {
            out.push_str(&format!("EM {:.2}  F1 {:.2}\n", 100.0 * g.exact_match, 100.0 * g.f1));
        }
        out
    }
}

pub fn eval(ws: &Workspace, checkpoint: Option<&Path>, split: Split) -> AppResult<EvalOutput> {
    let (params, checkpoint_sha256) = ws.load_params(checkpoint)?;
    let corpus = ws.split(split);
    let policy = ws.policy(corpus, &params)?;
    let cfg = ws.config.eval_config();
    let trajectories = rollout_all(corpus, policy.as_ref(), ws.retriever(), &cfg, ws.executor())?;
    let mut report = summarize(corpus, &trajectories, cfg.num_hops)?;
    if ws.config.eval.with_generator {
        let generator = ws.generator.as_ref().expect("validated: generator endpoint present");
        report.generator = Some(evaluate_generation(corpus, &trajectories, generator, ws.executor())?);
    }
    Ok(EvalOutput { corpus_hash: ws.corpus_hash.clone(), checkpoint_sha256, policy_version: params.version, split, report })
}

/// Diversity statistics of a sampled dataset, recomputed from the reward
/// groups recorded in its manifest.
pub fn stats(dataset_path: &Path) -> AppResult<DiversityStats> {
    let loaded = read_dataset(dataset_path)?;
    Ok(loaded.manifest.sampling.overall_stats()?)
}

pub fn audit_greedy(ws: &Workspace, checkpoint: Option<&Path>, num_questions: usize) -> AppResult<GreedyAuditReport> {
    let (params, _) = ws.load_params(checkpoint)?;
    let corpus = &ws.train;
    let policy = ws.policy(corpus, &params)?;
    let reward = ws.reward(corpus);
    Ok(greedy_audit(
        corpus,
        &ws.config.prompts,
        policy.as_ref(),
        policy.as_ref(),
        ws.retriever(),
        reward.as_ref(),
        num_questions,
        &ws.config.sampler_config(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutput {
    pub iteration: u32,
    pub sampled_with_version: u64,
    pub version: u64,
    pub num_questions: usize,
    pub dataset: SampleOutput,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub eval: Option<EvalReport>,
}

/// Iterative training over question partitions; each iteration's artifacts
/// go to `<out_dir>/iter-<i>/`.
pub fn iterate(ws: &Workspace, out_dir: &Path) -> AppResult<Vec<IterationOutput>> {
    if ws.config.policy.backend != PolicyBackend::Desk {
        return Err(AppError::config("iterative training requires the desk policy backend"));
    }
    let reward = ws.reward(&ws.train);
    let eval_cfg = ws.config.eval_config();
    let held_out = ws.config.split.as_ref().map(|_| HeldOut { corpus: &ws.test, config: &eval_cfg });
    let results = iterative_training(
        &ws.train,
        &ws.config.prompts,
        &ws.initial_params(),
        ws.retriever(),
        reward.as_ref(),
        &ws.config.sampler_config(),
        &ws.config.trainer_config(),
        held_out,
        ws.executor(),
    )?;
    let mut outputs = Vec::with_capacity(results.len());
    let mut previous_checkpoint: Option<String> = None;
    for r in results {
        let dir = out_dir.join(format!("iter-{}", r.iteration));
        let subset = ws.train.with_questions(&r.question_ids)?;
        let bytes = dataset_bytes(&r.dataset);
        let manifest = ws.manifest(
            &r.dataset,
            &bytes,
            &subset,
            r.sampled_with_version,
            previous_checkpoint.clone(),
            r.dataset.summary.seed,
        );
        let dataset_path = dir.join("dataset.jsonl");
        let manifest_sha256 = write_dataset(&dataset_path, &bytes, &manifest)?;
        let ck = Checkpoint::new(
            &r.policy.params,
            ws.corpus_hash.clone(),
            Some(manifest_sha256.clone()),
            ws.config.trainer_config(),
            false,
            r.policy.phases.clone(),
        );
        let ck_path = dir.join("checkpoint.json");
        let checkpoint_sha256 = write_checkpoint(&ck_path, &ck)?;
        write_bytes(&dir.join("train_log.csv"), training_log_csv(&r.policy.training_log).as_bytes())?;
        previous_checkpoint = Some(checkpoint_sha256.clone());
        outputs.push(IterationOutput {
            iteration: r.iteration,
            sampled_with_version: r.sampled_with_version,
            version: r.policy.params.version,
            num_questions: r.question_ids.len(),
            dataset: SampleOutput {
                manifest: crate::files::manifest_path(&dataset_path),
                dataset: dataset_path,
                dataset_sha256: manifest.dataset_sha256.clone(),
                manifest_sha256,
                num_pairs: manifest.num_pairs,
                stats: manifest.overall_stats,
            },
            checkpoint: ck_path,
            checkpoint_sha256,
            eval: r.eval,
        });
    }
    write_json(&out_dir.join("iterations.json"), &outputs)?;
    Ok(outputs)
}
