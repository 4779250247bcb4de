//! On-disk formats: corpus JSONL, preference datasets with manifests,
//! policy checkpoints and training logs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hopforge_core::corpus::{Corpus, Document, Question};
use hopforge_core::metrics::DiversityStats;
use hopforge_core::policy::{PolicyParameters, QuerySample};
use hopforge_core::retrieval::Context;
use hopforge_core::sampler::{PreferenceDataset, PreferencePair, SamplingSummary};
use hopforge_core::trainer::{LogEntry, PhaseReport, TrainerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{AppError, AppResult};

pub const DATASET_FORMAT: &str = "hopforge-dataset/1";
pub const CHECKPOINT_FORMAT: &str = "hopforge-checkpoint/1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> AppResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| AppError::io(path, e))?))
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records are always serializable");
        out.push(b'\n');
    }
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("values are always serializable");
    text.push(b'\n');
    write_bytes(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::integrity(format!("{}: {e}", path.display())))
}

/// Parses one JSON object per non-blank line, reporting 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .map_err(|e| AppError::integrity(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    if out.is_empty() {
        log::warn!("{} contains no records", path.display());
    }
    Ok(out)
}

/// Loads a corpus from a documents file and a questions file (`qa_jsonl`).
pub fn load_corpus(documents: &Path, questions: &Path) -> AppResult<Corpus> {
    let docs: Vec<Document> = read_jsonl(documents)?;
    let qs: Vec<Question> = read_jsonl(questions)?;
    Ok(Corpus::new(docs, qs)?)
}

pub fn corpus_bytes(corpus: &Corpus) -> (Vec<u8>, Vec<u8>) {
    (to_jsonl(corpus.documents()), to_jsonl(corpus.questions()))
}

pub fn write_corpus(corpus: &Corpus, documents: &Path, questions: &Path) -> AppResult<()> {
    let (d, q) = corpus_bytes(corpus);
    write_bytes(documents, &d)?;
    write_bytes(questions, &q)
}

/// Content hash of a corpus, independent of where it was loaded from.
pub fn corpus_hash(corpus: &Corpus) -> String {
    let (d, q) = corpus_bytes(corpus);
    let mut h = Sha256::new();
    h.update(b"documents\n");
    h.update(&d);
    h.update(b"questions\n");
    h.update(&q);
    hex::encode(h.finalize())
}

/// One line of a preference dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub question_id: String,
    pub hop: u32,
    pub context_doc_ids: Vec<String>,
    pub chosen_query: String,
    pub rejected_query: String,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
    pub chosen_prompt_id: String,
    pub rejected_prompt_id: String,
}

impl From<&PreferencePair> for PairRecord {
    fn from(p: &PreferencePair) -> Self {
        Self {
            question_id: p.question_id.clone(),
            hop: p.hop,
            context_doc_ids: p.context_before.doc_ids.clone(),
            chosen_query: p.chosen.query.clone(),
            rejected_query: p.rejected.query.clone(),
            chosen_reward: p.chosen_reward,
            rejected_reward: p.rejected_reward,
            chosen_prompt_id: p.chosen.prompt_id.clone(),
            rejected_prompt_id: p.rejected.prompt_id.clone(),
        }
    }
}

impl PairRecord {
    pub fn into_pair(self, temperature: f64) -> PreferencePair {
        let sample = |query, prompt_id| QuerySample { query, logprob: None, prompt_id, temperature };
        PreferencePair {
            question_id: self.question_id,
            hop: self.hop,
            context_before: Context::from_ids(self.context_doc_ids),
            chosen: sample(self.chosen_query, self.chosen_prompt_id),
            rejected: sample(self.rejected_query, self.rejected_prompt_id),
            chosen_reward: self.chosen_reward,
            rejected_reward: self.rejected_reward,
        }
    }
}

/// Sidecar describing how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub code_version: String,
    /// `SOURCE_DATE_EPOCH` when set, so reruns stay byte-identical.
    pub created_at: Option<String>,
    pub seed: u64,
    pub corpus_hash: String,
    pub dataset_sha256: String,
    pub num_pairs: usize,
    pub num_questions: usize,
    /// Version of the desk policy that produced the samples.
    pub policy_version: u64,
    pub policy_checkpoint_sha256: Option<String>,
    pub query_template_version: String,
    pub answer_template_version: String,
    pub answer_normalization: String,
    pub best_prompt: Option<String>,
    pub overall_stats: Option<DiversityStats>,
    pub sampling: SamplingSummary,
    pub config: PipelineConfig,
}

/// `<dir>/<stem>.manifest.json` for a dataset at `<dir>/<stem>.jsonl`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("manifest.json")
}

pub fn source_date() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH").ok().filter(|s| !s.is_empty())
}

pub fn dataset_bytes(dataset: &PreferenceDataset) -> Vec<u8> {
    let records: Vec<PairRecord> = dataset.pairs.iter().map(PairRecord::from).collect();
    to_jsonl(&records)
}

/// Writes the dataset and its manifest; returns the manifest's hash.
pub fn write_dataset(path: &Path, bytes: &[u8], manifest: &DatasetManifest) -> AppResult<String> {
    write_bytes(path, bytes)?;
    let mpath = manifest_path(path);
    write_json(&mpath, manifest)?;
    file_sha256(&mpath)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: PreferenceDataset,
    pub manifest: DatasetManifest,
    pub manifest_sha256: String,
}

/// Reads a dataset and its manifest, checking that they belong together.
pub fn read_dataset(path: &Path) -> AppResult<LoadedDataset> {
    let mpath = manifest_path(path);
    if !mpath.exists() {
        return Err(AppError::integrity(format!(
            "{} has no manifest (expected {})",
            path.display(),
            mpath.display()
        )));
    }
    let manifest: DatasetManifest = read_json(&mpath)?;
    let manifest_sha256 = file_sha256(&mpath)?;
    let actual = file_sha256(path)?;
    if actual != manifest.dataset_sha256 {
        return Err(AppError::integrity(format!(
            "{} does not match its manifest (sha256 {actual}, manifest says {})",
            path.display(),
            manifest.dataset_sha256
        )));
    }
    let records: Vec<PairRecord> = read_jsonl(path)?;
    let temperature = manifest.sampling.temperature;
    let pairs = records.into_iter().map(|r| r.into_pair(temperature)).collect();
    let dataset = PreferenceDataset { pairs, summary: manifest.sampling.clone() };
    Ok(LoadedDataset { dataset, manifest, manifest_sha256 })
}

/// Saved desk-policy weights. Only non-zero weights are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub code_version: String,
    pub feature_dim: usize,
    pub version: u64,
    pub weights: Vec<(u32, f64)>,
    pub corpus_hash: String,
    pub dataset_manifest_sha256: Option<String>,
    pub skip_ipo: bool,
    pub trainer: TrainerConfig,
    pub phases: Vec<PhaseReport>,
}

impl Checkpoint {
    pub fn new(
        params: &PolicyParameters,
        corpus_hash: String,
        dataset_manifest_sha256: Option<String>,
        trainer: TrainerConfig,
        skip_ipo: bool,
        phases: Vec<PhaseReport>,
    ) -> Self {
        let weights = params
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i as u32, *w))
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            code_version: CODE_VERSION.into(),
            feature_dim: params.feature_dim,
            version: params.version,
            weights,
            corpus_hash,
            dataset_manifest_sha256,
            skip_ipo,
            trainer,
            phases,
        }
    }

    pub fn params(&self) -> AppResult<PolicyParameters> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(AppError::integrity(format!("unsupported checkpoint format `{}`", self.format)));
        }
        let mut params = PolicyParameters::zeros(self.feature_dim);
        params.version = self.version;
        for &(i, w) in &self.weights {
            let slot = params
                .weights
                .get_mut(i as usize)
                .ok_or_else(|| AppError::integrity(format!("checkpoint weight index {i} out of range")))?;
            *slot = w;
        }
        params.validate()?;
        Ok(params)
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> AppResult<String> {
    write_json(path, checkpoint)?;
    file_sha256(path)
}

pub fn read_checkpoint(path: &Path) -> AppResult<Checkpoint> {
    read_json(path)
}

pub fn training_log_csv(log: &[LogEntry]) -> String {
    let mut out = String::from("step,loss\n");
    for e in log {
        out.push_str(&format!("{},{}\n", e.step, e.loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> Corpus {
        let doc = |id: &str| Document { id: id.into(), title: id.to_uppercase(), text: format!("text of {id}") };
        let q = Question {
            id: "q1".into(),
            text: "what?".into(),
            gold_doc_ids: vec!["a".into(), "b".into()],
            gold_answer: "x".into(),
            required_hops: 2,
        };
        Corpus::new(vec![doc("a"), doc("b")], vec![q]).unwrap()
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (d, q) = (dir.path().join("docs.jsonl"), dir.path().join("qs.jsonl"));
        let corpus = tiny_corpus();
        write_corpus(&corpus, &d, &q).unwrap();
        let back = load_corpus(&d, &q).unwrap();
        assert_eq!(back.documents().len(), 2);
        assert_eq!(back.questions().len(), 1);
        assert_eq!(corpus_hash(&back), corpus_hash(&corpus));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("docs.jsonl");
        fs::write(&d, "{\"id\":\"a\",\"title\":\"A\",\"text\":\"t\"}\n\n{not json}\n").unwrap();
        let err = read_jsonl::<Document>(&d).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.message.contains("docs.jsonl:3"), "{err}");
    }

    #[test]
    fn dangling_gold_id_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let (d, q) = (dir.path().join("docs.jsonl"), dir.path().join("qs.jsonl"));
        fs::write(&d, "{\"id\":\"a\",\"title\":\"A\",\"text\":\"t\"}\n").unwrap();
        fs::write(
            &q,
            "{\"id\":\"q\",\"text\":\"?\",\"gold_doc_ids\":[\"zz\"],\"gold_answer\":\"x\",\"required_hops\":1}\n",
        )
        .unwrap();
        assert_eq!(load_corpus(&d, &q).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn empty_files_give_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (d, q) = (dir.path().join("docs.jsonl"), dir.path().join("qs.jsonl"));
        fs::write(&d, "").unwrap();
        fs::write(&q, "").unwrap();
        let corpus = load_corpus(&d, &q).unwrap();
        assert!(corpus.documents().is_empty() && corpus.questions().is_empty());
    }

    #[test]
    fn pair_record_schema() {
        let line = r#"{"question_id":"q","hop":2,"context_doc_ids":["a"],"chosen_query":"x","rejected_query":"y","chosen_reward":1.0,"rejected_reward":0.5,"chosen_prompt_id":"p0","rejected_prompt_id":"p1"}"#;
        let rec: PairRecord = serde_json::from_str(line).unwrap();
        let pair = rec.clone().into_pair(0.7);
        assert_eq!(pair.context_before.doc_ids, vec!["a".to_string()]);
        assert_eq!(PairRecord::from(&pair), rec);
        assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = PolicyParameters::zeros(10);
        p.weights[3] = 0.25;
        p.weights[7] = -1.5;
        p.version = 2;
        let ck = Checkpoint::new(&p, "h".into(), None, TrainerConfig::default(), false, vec![]);
        assert_eq!(ck.weights, vec![(3, 0.25), (7, -1.5)]);
        assert_eq!(ck.params().unwrap(), p);
        let mut bad = ck.clone();
        bad.weights.push((10, 1.0));
        assert!(bad.params().is_err());
    }

    #[test]
    fn training_log_format() {
        let log = [LogEntry { step: 0, loss: 100.0 }, LogEntry { step: 1, loss: 0.5 }];
        assert_eq!(training_log_csv(&log), "step,loss\n0,100\n1,0.5\n");
    }
}
