//! Acceptance suite. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use hopforge::commands::{self, Split, Workspace};
use hopforge::config::{PipelineConfig, SplitSpec};
use hopforge_core::metrics::{average_precision, diversity_stats, exact_match, f1_word, recall};
use hopforge_core::policy::{FeatureVector, PolicyParameters, QuerySample};
use hopforge_core::retrieval::Context;
use hopforge_core::reward::{disagreement_analysis, DualReward, DualRewardRecord};
use hopforge_core::sampler::{build_preference_pairs, select_next_index, HopRecord, HopSample};
use hopforge_core::trainer::{
    bt_reference_loss, bt_reference_loss_grad, finite_difference_check, ipo_pair_loss, ipo_pair_loss_grad,
    PairExample,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    check(elapsed < budget, format!("{detail}; {:.1}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// Brute-force metric oracles

fn oracle_ap(retrieved: &[String], gold: &[String]) -> f64 {
    let gold: HashSet<&String> = gold.iter().collect();
    let mut total = 0.0;
    for k in 1..=retrieved.len() {
        if gold.contains(&retrieved[k - 1]) {
            total += retrieved[..k].iter().filter(|d| gold.contains(d)).count() as f64 / k as f64;
        }
    }
    total / gold.len() as f64
}

fn oracle_recall(retrieved: &[String], gold: &[String]) -> f64 {
    gold.iter().filter(|g| retrieved.contains(g)).count() as f64 / gold.len() as f64
}

fn oracle_words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty() && !matches!(w.as_str(), "a" | "an" | "the"))
        .collect()
}

fn oracle_f1(pred: &str, gold: &str) -> f64 {
    let (p, g) = (oracle_words(pred), oracle_words(gold));
    if p.is_empty() || g.is_empty() {
        return f64::from(u8::from(p.is_empty() && g.is_empty()));
    }
    let mut remaining = g.clone();
    let mut common = 0;
    for w in &p {
        if let Some(i) = remaining.iter().position(|x| x == w) {
            remaining.swap_remove(i);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let rec = common as f64 / g.len() as f64;
    2.0 * precision * rec / (precision + rec)
}

fn random_ranking(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    let mut pool: Vec<String> = (0..12).map(|i| format!("d{i}")).collect();
    pool.shuffle(rng);
    let retrieved = pool[..rng.random_range(0..=12)].to_vec();
    pool.shuffle(rng);
    let gold = pool[..rng.random_range(1..=5)].to_vec();
    (retrieved, gold)
}

fn random_answer(rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 14] =
        ["the", "a", "an", "Paris", "paris", "France", "red", "fox", "fox.", "42", "Cat!", "cat", "x-y", "sat"];
    (0..rng.random_range(0..6)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn metric_oracles() -> Outcome {
    const TOL: f64 = 1e-12;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (r, g) = random_ranking(&mut rng);
        mismatches += usize::from((average_precision(&r, &g).unwrap() - oracle_ap(&r, &g)).abs() > TOL);
        let (r, g) = random_ranking(&mut rng);
        mismatches += usize::from((recall(&r, &g).unwrap() - oracle_recall(&r, &g)).abs() > TOL);
        let (p, g) = (random_answer(&mut rng), random_answer(&mut rng));
        mismatches += usize::from(exact_match(&p, &g) != f64::from(u8::from(oracle_words(&p) == oracle_words(&g))));
        let (p, g) = (random_answer(&mut rng), random_answer(&mut rng));
        mismatches += usize::from((f1_word(&p, &g) - oracle_f1(&p, &g)).abs() > TOL);

        let values = [0.0, 0.25, 0.5, 1.0 / 3.0, 1.0];
        let groups: BTreeMap<String, Vec<f64>> = (0..rng.random_range(1..6))
            .map(|i| {
                let g = (0..rng.random_range(1..6)).map(|_| values[rng.random_range(0..values.len())]).collect();
                (format!("q{i}"), g)
            })
            .collect();
        let s = diversity_stats(&groups).unwrap();
        let n = groups.len() as f64;
        let gold = groups.values().filter(|g| g.contains(&1.0)).count() as f64 / n;
        let unique = groups.values().map(|g| g.iter().map(|r| r.to_bits()).collect::<HashSet<_>>().len()).sum::<usize>()
            as f64
            / n;
        let sd = groups
            .values()
            .map(|g| {
                let m = g.iter().sum::<f64>() / g.len() as f64;
                (g.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / g.len() as f64).sqrt()
            })
            .sum::<f64>()
            / n;
        let pairs: usize = groups
            .values()
            .map(|g| (0..g.len()).flat_map(|i| (i + 1..g.len()).map(move |j| (i, j))).filter(|&(i, j)| g[i] != g[j]).count())
            .sum();
        let ok = (s.gold_rate - gold).abs() <= TOL
            && (s.mean_unique_ap - unique).abs() <= TOL
            && (s.mean_ap_stddev - sd).abs() <= TOL
            && s.num_preference_pairs == pairs;
        mismatches += usize::from(!ok);
    }
    let detail = format!("{mismatches} mismatches over 5 x 1000 instances");
    if mismatches > 0 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(10), detail)
}

// ---------------------------------------------------------------------------
// Loss identities and gradients

fn random_pair(rng: &mut ChaCha8Rng, dim: u32) -> PairExample {
    let n = rng.random_range(2..8);
    let features = (0..n)
        .map(|_| {
            let mut idx: Vec<u32> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..dim)).collect();
            idx.sort_unstable();
            idx.dedup();
            FeatureVector { entries: idx.into_iter().map(|i| (i, rng.random_range(-1.0..1.0))).collect() }
        })
        .collect();
    let chosen = rng.random_range(0..n);
    PairExample { features, chosen, rejected: (chosen + rng.random_range(1..n)) % n }
}

fn random_params(rng: &mut ChaCha8Rng, dim: usize) -> PolicyParameters {
    let mut p = PolicyParameters::zeros(dim);
    p.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    p
}

fn loss_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let examples: Vec<PairExample> = (0..200).map(|_| random_pair(&mut rng, 32)).collect();
    let theta = random_params(&mut rng, 32);
    let mean_ipo =
        examples.iter().map(|e| ipo_pair_loss(&theta, &theta, e, 0.05, 1.0).unwrap()).sum::<f64>() / examples.len() as f64;
    let worst_bt = examples
        .iter()
        .map(|e| (bt_reference_loss(&theta, &theta, e, 0.1, 1.0).unwrap() - std::f64::consts::LN_2).abs())
        .fold(0.0, f64::max);
    let detail = format!("mean IPO {mean_ipo}, max |BT - ln 2| {worst_bt:.1e}");
    if mean_ipo != 100.0 || worst_bt > 1e-12 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(1), detail)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ipo, mut bt) = (0.0f64, 0.0f64);
    for probe in 0..100 {
        let ex = random_pair(&mut rng, 48);
        let params = random_params(&mut rng, 48);
        let reference = random_params(&mut rng, 48);
        let t = rng.random_range(0.5..1.5);
        let r = finite_difference_check(&params, |p| ipo_pair_loss_grad(p, &reference, &ex, 0.05, t), 1, 1e-5, probe)
            .unwrap();
        ipo = ipo.max(r.max_relative_error);
        let r = finite_difference_check(&params, |p| bt_reference_loss_grad(p, &reference, &ex, 0.1, t), 1, 1e-5, probe)
            .unwrap();
        bt = bt.max(r.max_relative_error);
    }
    let detail = format!("max relative error IPO {ipo:.2e}, BT {bt:.2e} over 100 probes");
    if ipo >= 1e-5 || bt >= 1e-5 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(30), detail)
}

// ---------------------------------------------------------------------------
// Pair construction and context selection

fn record(rewards: &[f64]) -> HopRecord {
    HopRecord {
        question_id: "q".into(),
        hop: 1,
        context_before: Context::new(),
        samples: rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| HopSample {
                sample: QuerySample { query: format!("q{i}"), logprob: None, prompt_id: format!("p{i}"), temperature: 1.0 },
                context_after: Context::from_ids([format!("d{i}")]),
                reward,
            })
            .collect(),
        failures: 0,
    }
}

fn sampler_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let rewards: Vec<f64> = (0..rng.random_range(0..9)).map(|_| [0.0, 0.25, 0.5, 1.0][rng.random_range(0..4)]).collect();
        let brute = (0..rewards.len())
            .flat_map(|i| (i + 1..rewards.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| rewards[i] != rewards[j])
            .count();
        let built = build_preference_pairs(&record(&rewards));
        if built.len() != brute || built.iter().any(|p| p.chosen_reward <= p.rejected_reward) {
            return Err(format!("pair count {} vs {brute} for {rewards:?}", built.len()));
        }
    }
    let rec = record(&[1.0, 0.5, 0.25]);
    let mut counts = [0usize; 3];
    for seed in 0..10_000 {
        counts[select_next_index(&rec, 1.0, seed).unwrap()] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / 10_000.0).collect();
    let detail = format!("pair counts exact on 1000 multisets; selection frequencies {freq:?} vs [0, 2/3, 1/3]");
    if counts[0] != 0 || (freq[1] - 2.0 / 3.0).abs() > 0.02 || (freq[2] - 1.0 / 3.0).abs() > 0.02 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(60), detail)
}

// ---------------------------------------------------------------------------
// End-to-end pipeline runs

fn pipeline_config(seed: u64, out: &Path) -> PipelineConfig {
    PipelineConfig {
        split: Some(SplitSpec { test_questions: 200, seed: 0 }),
        output_dir: out.to_path_buf(),
        seed,
        ..PipelineConfig::default()
    }
}

struct TrainedRun {
    base: f64,
    sft: f64,
    ipo: f64,
}

fn sample_and_train(config: PipelineConfig, workers: usize, dir: &Path) -> (Workspace, [String; 3]) {
    let ws = Workspace::open(config, workers).unwrap();
    let data = dir.join("dataset.jsonl");
    let sampled = commands::sample(&ws, None, &data).unwrap();
    let trained =
        commands::train(&ws, &data, None, false, &dir.join("checkpoint.json"), &dir.join("train_log.csv")).unwrap();
    (ws, [sampled.dataset_sha256, sampled.manifest_sha256, trained.checkpoint_sha256])
}

fn test_recall(ws: &Workspace, checkpoint: Option<&Path>) -> f64 {
    commands::eval(ws, checkpoint, Split::Test).unwrap().report.final_recall()
}

fn run_pipeline(seed: u64, hop_subset: Option<(u32, u32)>) -> TrainedRun {
    let dir = tempfile::tempdir().unwrap();
    let mut config = pipeline_config(seed, dir.path());
    config.sampling.hop_subset = hop_subset;
    let (ws, _) = sample_and_train(config, 1, dir.path());
    let data = dir.path().join("dataset.jsonl");
    let sft = dir.path().join("sft.json");
    commands::train(&ws, &data, None, true, &sft, &dir.path().join("sft_log.csv")).unwrap();
    TrainedRun {
        base: test_recall(&ws, None),
        sft: test_recall(&ws, Some(&sft)),
        ipo: test_recall(&ws, Some(&dir.path().join("checkpoint.json"))),
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let ws = Workspace::open(pipeline_config(0, Path::new("unused")), 1).unwrap();
    let (train, test) = (ws.split(Split::Train).questions().len(), ws.split(Split::Test).questions().len());
    drop(ws);
    let run = run_pipeline(0, None);
    let gain = 100.0 * (run.ipo - run.base);
    let detail = format!(
        "{train} train / {test} test; 2-hop recall base {:.2} < distilled {:.2} < preference-trained {:.2}, gain {gain:.2} points",
        100.0 * run.base,
        100.0 * run.sft,
        100.0 * run.ipo
    );
    if !(train >= 500 && test >= 200 && run.base < run.sft && run.sft < run.ipo && gain >= 10.0) {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(600), detail)
}

fn iterative() -> Outcome {
    let mut lines = Vec::new();
    let (mut regressions, mut improvements) = (0, 0);
    for seed in 0..3 {
        let dir = tempfile::tempdir().unwrap();
        let mut config = pipeline_config(seed, dir.path());
        config.trainer.num_iterations = 2;
        let ws = Workspace::open(config, 1).unwrap();
        let out = commands::iterate(&ws, dir.path()).unwrap();
        let r: Vec<f64> = out.iter().map(|o| 100.0 * o.eval.as_ref().unwrap().final_recall()).collect();
        regressions += usize::from(r[1] < r[0] - 1.0);
        improvements += usize::from(r[1] > r[0]);
        lines.push(format!("seed {seed}: {:.2} -> {:.2}", r[0], r[1]));
    }
    check(regressions == 0 && improvements >= 2, format!("{}; {improvements}/3 strictly better", lines.join(", ")))
}

fn greedy_audit() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(pipeline_config(0, dir.path()), 1).unwrap();
    let report = commands::audit_greedy(&ws, None, 500).unwrap();
    check(
        report.fraction < 0.05 && report.num_cases > 0,
        format!(
            "fraction {:.4} ({} reversals in {} cases over {} questions)",
            report.fraction, report.reversals, report.num_cases, report.questions_examined
        ),
    )
}

fn hop_subset_ablation() -> Outcome {
    let mut lines = Vec::new();
    let mut wins = 0;
    for seed in 0..3 {
        let all = run_pipeline(seed, None).ipo;
        let first = run_pipeline(seed, Some((1, 1))).ipo;
        wins += usize::from(all >= first);
        lines.push(format!("seed {seed}: all hops {:.2} vs first hop {:.2}", 100.0 * all, 100.0 * first));
    }
    check(wins >= 2, format!("{}; {wins}/3 seeds", lines.join(", ")))
}

fn determinism() -> Outcome {
    let mut hashes = Vec::new();
    for workers in [1, 4, 1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let (_, h) = sample_and_train(pipeline_config(7, dir.path()), workers, dir.path());
        hashes.push(h);
    }
    let same = hashes.iter().all(|h| *h == hashes[0]);
    check(
        same,
        format!("dataset {}, manifest {}, checkpoint {} across workers 1,4 x2", &hashes[0][0][..12], &hashes[0][1][..12], &hashes[0][2][..12]),
    )
}

// ---------------------------------------------------------------------------
// Reward disagreement fixtures

fn dual(hop: u32, pairs: &[(f64, f64)]) -> DualRewardRecord {
    DualRewardRecord { question_id: "q".into(), hop, rewards: pairs.iter().map(|&(ap, f1)| DualReward { ap, f1 }).collect() }
}

fn disagreement() -> Outcome {
    // First record, ranked by F1: (0,1) (0,2) (0,3) reverse AP, (1,2) ties
    // on AP, (1,3) agrees and (2,3) ties on F1 so forms no pair.
    let records = vec![
        dual(1, &[(1.0, 0.2), (0.5, 0.8), (0.5, 0.5), (0.0, 0.5)]),
        dual(2, &[(0.5, 0.0), (0.5, 1.0)]),
    ];
    let all = disagreement_analysis(&records, 0.0).map_err(|e| e.to_string())?;
    let gapped = disagreement_analysis(&records, 0.35).map_err(|e| e.to_string())?;
    let hop1 = all.per_hop[&1];
    let ok = all.num_pairs == 6
        && all.hard_disagree_fraction == 0.5
        && all.soft_disagree_fraction == 2.0 / 6.0
        && (hop1.num_pairs, hop1.hard, hop1.soft) == (5, 3, 1)
        && (gapped.totals.num_pairs, gapped.totals.hard, gapped.totals.soft) == (2, 1, 1);
    check(
        ok,
        format!(
            "hard {} soft {:.4} over {} pairs; with F1 gap 0.35: {}/{} hard, {}/{} soft",
            all.hard_disagree_fraction,
            all.soft_disagree_fraction,
            all.num_pairs,
            gapped.totals.hard,
            gapped.totals.num_pairs,
            gapped.totals.soft,
            gapped.totals.num_pairs
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 metric oracle equivalence", metric_oracles),
        ("2 preference loss identities", loss_identities),
        ("3 gradient verification", gradient_check),
        ("4 pair construction and selection", sampler_fidelity),
        ("5 end-to-end policy improvement", end_to_end),
        ("6 iterative improvement", iterative),
        ("7 greedy assumption audit", greedy_audit),
        ("8 hop subset ablation", hop_subset_ablation),
        ("9 determinism across workers", determinism),
        ("10 disagreement mechanics", disagreement),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut summary: HashMap<&str, bool> = HashMap::new();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(d) => println!("PASS [{name}] {d} ({secs:.1}s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{name}] {d} ({secs:.1}s)");
            }
        }
        summary.insert(name, outcome.is_ok());
    }
    println!("acceptance: {} passed, {failed} failed", summary.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
