//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scarlet_core::attribution::{attribute, fit_ridge, AttributionConfig, Observation};
use scarlet_core::config::RunConfig;
use scarlet_core::evalkit::{
    all_perturbations, exact_match_accuracy, ndcg_at_k, rouge_l, run_gti_benchmark, run_retrieval_eval, token_f1,
    GtiInstance, PerturbationRanker, RetrievalEvalInstance, RetrievalEvalRecord,
};
use scarlet_core::jsonl::read_jsonl;
use scarlet_core::oracles::mock::{mock_linear_score, LinearMockScorer, LinearMockSpec};
use scarlet_core::oracles::ScorerOracle;
use scarlet_core::pipeline::{cmd_e2e, MODEL};
use scarlet_core::prompts::{parse_generated_passage, parse_new_data, parse_rank_line, parse_verdict, Verdict};
use scarlet_core::sampling::{cluster_1d, ClusterLabel};
use scarlet_core::trainer::{batch_loss_and_grad, grad_check, pair_loss, ToyEncoder};
use scarlet_core::{Corpus, GenerationTarget, Passage, QueryText, Result, SharedContext, TrainingPairSet};

type Check = fn() -> std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> std::result::Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn passages(k: usize) -> Vec<Passage> {
    (0..k)
        .map(|i| Passage::corpus(format!("p{i}"), format!("passage number {i}")).unwrap())
        .collect()
}

fn target() -> GenerationTarget {
    GenerationTarget::new(QueryText::bare("q").unwrap(), "a").unwrap()
}

fn linear_oracle(spec: LinearMockSpec) -> LinearMockScorer {
    let ids = (0..spec.k()).map(|i| format!("p{i}")).collect();
    LinearMockScorer::new(spec, ids).unwrap()
}

fn surrogate_exactness() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_err: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for trial in 0..20 {
        let intercept = rng.random_range(-3.0..3.0);
        let effects: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let oracle = linear_oracle(LinearMockSpec::noiseless(intercept, effects.clone()));
        let ctx = SharedContext::new("c", passages(10), "s").unwrap();
        let cfg = AttributionConfig {
            n: 64,
            p: 0.5,
            lambda: 0.0,
            penalize_intercept: true,
            seed: trial,
        };
        let start = Instant::now();
        let report = attribute(&ctx, &target(), &cfg, &oracle).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        worst_err = worst_err.max((report.intercept - intercept).abs());
        for (got, want) in report.scores.iter().zip(&effects) {
            worst_err = worst_err.max((got - want).abs());
        }
    }
    ensure(
        worst_err <= 1e-9 && slowest < Duration::from_secs(1),
        format!("max coefficient error {worst_err:.3e}, slowest fit {slowest:?} over 20 planted models"),
    )
}

fn brute_force_equivalence() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut fits = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=6usize);
        let mut spec = LinearMockSpec::noiseless(
            rng.random_range(-2.0..2.0),
            (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
        );
        if k >= 2 {
            let i = rng.random_range(1..=k);
            let j = (i % k) + 1;
            spec.interactions.push((i, j, rng.random_range(-2.0..2.0)));
        }
        spec.noise_sigma = 0.3;
        spec.seed = rng.random();
        let vectors = all_perturbations(k).unwrap();
        let obs: Vec<Observation> = vectors
            .iter()
            .map(|v| Observation {
                vector: v.clone(),
                z: mock_linear_score(&spec, v.bits()).unwrap(),
            })
            .collect();
        let rows: Vec<Vec<u8>> = vectors.iter().map(|v| v.bits().to_vec()).collect();
        let z: Vec<f64> = obs.iter().map(|o| o.z).collect();
        for (lambda, penalize) in [(0.0, true), (1.0, true), (1.0, false)] {
            let (b0, scores) = fit_ridge(&obs, k, lambda, penalize).map_err(|e| e.to_string())?;
            let reference = common::gd_ridge(&rows, &z, lambda, penalize);
            worst = worst.max((b0 - reference[0]).abs());
            for (s, r) in scores.iter().zip(&reference[1..]) {
                worst = worst.max((s - r).abs());
            }
            fits += 1;
        }
    }
    ensure(
        worst <= 1e-6,
        format!("max |normal equations - gradient descent| = {worst:.3e} over {fits} fits"),
    )
}

fn interaction_capture() -> std::result::Result<String, String> {
    let k = 10;
    let mut hits = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let mut idx: Vec<usize> = (1..=k).collect();
        idx.shuffle(&mut rng);
        let (i, j) = (idx[0], idx[1]);
        let mut spec = LinearMockSpec::noiseless(0.0, vec![0.0; k]);
        spec.interactions.push((i, j, 5.0));
        spec.noise_sigma = 0.5;
        spec.seed = trial;
        let oracle = linear_oracle(spec);
        let ctx = SharedContext::new("c", passages(k), "s").unwrap();
        let cfg = AttributionConfig {
            n: 64,
            seed: trial,
            ..AttributionConfig::default()
        };
        let r = attribute(&ctx, &target(), &cfg, &oracle).map_err(|e| e.to_string())?;
        let low = r.scores[i - 1].min(r.scores[j - 1]);
        let others = (1..=k)
            .filter(|&m| m != i && m != j)
            .map(|m| r.scores[m - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        if low > others {
            hits += 1;
        }
    }
    ensure(
        hits >= 95,
        format!("{hits}/100 trials rank both interacting passages on top"),
    )
}

/// Sum of planted per-passage effects over the passages present.
struct PlantedScorer {
    effects: HashMap<String, f64>,
}

impl ScorerOracle for PlantedScorer {
    fn score_ground_truth(&self, context: &[Passage], _: &QueryText, _: &GenerationTarget) -> Result<Vec<f64>> {
        Ok(vec![context.iter().filter_map(|p| self.effects.get(p.id())).sum()])
    }
}

fn gti_benchmark() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut effects = HashMap::new();
    let mut instances = Vec::new();
    for q in 0..20 {
        let useful = rng.random_range(0..10usize);
        let ps: Vec<Passage> = (0..10)
            .map(|i| Passage::corpus(format!("q{q}-p{i}"), format!("candidate {i} for question {q}")).unwrap())
            .collect();
        for (i, p) in ps.iter().enumerate() {
            effects.insert(p.id().to_string(), if i == useful { 4.0 } else { 0.0 });
        }
        let gains = (0..10).map(|i| if i == useful { 1.0 } else { 0.0 }).collect();
        let query = QueryText::new(Some("Answer the question."), &format!("question {q}")).unwrap();
        instances.push(GtiInstance::new(query, "answer", ps, gains).unwrap());
    }
    let oracle = PlantedScorer { effects };
    let ranker = PerturbationRanker {
        oracle: &oracle,
        config: AttributionConfig::default(),
        max_inflight: 4,
    };
    let res = run_gti_benchmark(&instances, &ranker, &[1, 5]).map_err(|e| e.to_string())?;
    let (n1, n5) = (res[0].mean_ndcg, res[1].mean_ndcg);
    ensure(
        n1 >= 0.95 && n5 >= 0.95,
        format!("nDCG@1 {n1:.4}, nDCG@5 {n5:.4} on 20 planted instances"),
    )
}

fn clustering_equivalence() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut compared = 0;
    let mut rejected = 0;
    for trial in 0..1000 {
        let len = rng.random_range(1..=12usize);
        let scores: Vec<f64> = (0..len)
            .map(|_| {
                let x: f64 = normal.sample(&mut rng);
                if trial % 2 == 0 {
                    x
                } else {
                    (x * 3.0).round() / 10.0
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        match (cluster_1d(&scores), common::exhaustive_cluster(&sorted)) {
            (Ok(got), Some((_, a, b))) => {
                let mut want = vec![ClusterLabel::Negative; len];
                for (rank, &i) in order.iter().enumerate() {
                    want[i] = if rank < a {
                        ClusterLabel::Positive
                    } else if rank < b {
                        ClusterLabel::Discard
                    } else {
                        ClusterLabel::Negative
                    };
                }
                if got.labels != want {
                    return Err(format!("mismatch on {scores:?}: got {:?}, want {want:?}", got.labels));
                }
                compared += 1;
            }
            (Err(_), None) => rejected += 1,
            (got, want) => return Err(format!("disagreement on {scores:?}: {got:?} vs {want:?}")),
        }
    }
    Ok(format!(
        "1000 lists identical ({compared} partitioned, {rejected} rejected as degenerate)"
    ))
}

fn random_text(rng: &mut ChaCha8Rng, vocab: &[String], len: usize) -> String {
    (0..len)
        .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn reference_encode(enc: &ToyEncoder, text: &str) -> Vec<f64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut v = vec![0.0; enc.dim()];
    for w in &words {
        for (x, r) in v.iter_mut().zip(enc.row(enc.bucket(w))) {
            *x += r / words.len() as f64;
        }
    }
    v
}

fn reference_loss(enc: &ToyEncoder, batch: &[TrainingPairSet]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut loss = 0.0;
    for set in batch {
        let q = reference_encode(enc, &set.query.rendered);
        for p in &set.positives {
            let sp = dot(&q, &reference_encode(enc, p.text()));
            for n in &set.negatives {
                let sn = dot(&q, &reference_encode(enc, n.text()));
                loss += (1.0 + (sn - sp).exp()).ln();
            }
        }
    }
    loss
}

fn gradient_correctness() -> std::result::Result<String, String> {
    let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let mut library_worst: f64 = 0.0;
    let mut coords = 0;
    for b in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + b);
        let mut enc = ToyEncoder::new(97, 6, 0.5, b).unwrap();
        let batch: Vec<TrainingPairSet> = (0..rng.random_range(1..=3))
            .map(|s| {
                let mk = |rng: &mut ChaCha8Rng, tag: &str, n: usize| -> Vec<Passage> {
                    (0..n)
                        .map(|i| {
                            let len = rng.random_range(2..=6);
                            Passage::corpus(format!("{tag}{s}-{i}"), random_text(rng, &vocab, len)).unwrap()
                        })
                        .collect()
                };
                let qlen = rng.random_range(2..=5);
                let query = QueryText::bare(&random_text(&mut rng, &vocab, qlen)).unwrap();
                let (np, nn) = (rng.random_range(1..=2), rng.random_range(1..=3));
                let pos = mk(&mut rng, "p", np);
                let neg = mk(&mut rng, "n", nn);
                TrainingPairSet::new(query, pos, neg).unwrap()
            })
            .collect();
        let (_, grad) = batch_loss_and_grad(&enc, &batch).map_err(|e| e.to_string())?;
        for (&row, g) in &grad {
            for (c, &analytic) in g.iter().enumerate() {
                let orig = enc.row(row)[c];
                enc.row_mut(row)[c] = orig + eps;
                let up = reference_loss(&enc, &batch);
                enc.row_mut(row)[c] = orig - eps;
                let down = reference_loss(&enc, &batch);
                enc.row_mut(row)[c] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                coords += 1;
            }
        }
        library_worst = library_worst.max(grad_check(&enc, &batch, eps).map_err(|e| e.to_string())?);
    }
    ensure(
        worst < 1e-4 && library_worst < 1e-4,
        format!("max relative error {worst:.3e} over {coords} coordinates (grad_check {library_worst:.3e})"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn e2e_config(out: &Path) -> RunConfig {
    RunConfig::load(
        &common::fixture_config(),
        &[format!("paths.out_dir={:?}", out.display().to_string())],
    )
    .unwrap()
}

fn end_to_end_improvement() -> std::result::Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = e2e_config(tmp.path());
    let summary = cmd_e2e(&cfg).map_err(|e| e.to_string())?;
    let retrieval = &summary["eval"]["retrieval"];

    // Re-measure both sides from the artifacts rather than trusting the summary.
    let corpus = Corpus::new(read_jsonl(&cfg.input("corpus").unwrap()).unwrap()).unwrap();
    let records: Vec<RetrievalEvalRecord> = read_jsonl(&cfg.input("retrieval_eval").unwrap()).unwrap();
    let instances: Vec<RetrievalEvalInstance> = records
        .iter()
        .map(|r| RetrievalEvalInstance::resolve(r, &corpus).unwrap())
        .collect();
    let baseline = ToyEncoder::from_config(&cfg.train_config()).unwrap();
    let trained = ToyEncoder::load(&cfg.out(MODEL)).unwrap();
    let before = run_retrieval_eval(&baseline, &instances, 3).unwrap().mean_ndcg;
    let after = run_retrieval_eval(&trained, &instances, 3).unwrap().mean_ndcg;
    let consistent =
        (retrieval["baseline_ndcg"].as_f64() == Some(before)) && (retrieval["trained_ndcg"].as_f64() == Some(after));
    ensure(
        after - before >= 0.10 && consistent,
        format!(
            "held-out nDCG@3 {before:.4} -> {after:.4} (+{:.4}) on {} queries",
            after - before,
            instances.len()
        ),
    )
}

fn determinism() -> std::result::Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = e2e_config(&out);
    cmd_e2e(&cfg).map_err(|e| e.to_string())?;
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    cmd_e2e(&cfg).map_err(|e| e.to_string())?;
    let second = snapshot(&out);
    let differing: Vec<&String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    ensure(
        differing.is_empty() && !first.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", first.len()),
    )
}

fn metric_suite() -> std::result::Result<String, String> {
    let ndcg = ndcg_at_k(&[0.0, 1.0, 1.0], 3).unwrap();
    let rl = rouge_l("a b c", "a c d");
    let f1 = token_f1("a b", "b c");
    let worst_pair = [-30.0, -1.5, 0.0, 0.25, 7.0, 500.0]
        .iter()
        .map(|&s| (pair_loss(s, s) - std::f64::consts::LN_2).abs())
        .fold(0.0, f64::max);
    let em = exact_match_accuracy("The answer is Paris.", &["Paris"]).unwrap()
        && exact_match_accuracy("paris", &["Paris"]).unwrap()
        && !exact_match_accuracy("London", &["Paris"]).unwrap()
        && exact_match_accuracy("it was  New\tYork", &["new york"]).unwrap()
        && exact_match_accuracy("Berlin", &["Paris", "berlin"]).unwrap()
        && exact_match_accuracy("x", &[]).is_err();
    ensure(
        (ndcg - 0.69343).abs() <= 1e-5
            && (rl - 2.0 / 3.0).abs() <= 1e-9
            && (f1 - 0.5).abs() <= 1e-9
            && worst_pair <= 1e-12
            && em,
        format!("ndcg {ndcg:.6}, rouge_l {rl:.12}, token_f1 {f1}, pair_loss dev {worst_pair:.1e}, exact match {em}"),
    )
}

fn parser_conformance() -> std::result::Result<String, String> {
    let rank: Vec<(&str, usize, Option<Vec<usize>>)> = vec![
        ("Answer: Paris\nMy rank: [2]>[1]>[3]", 3, Some(vec![2, 1, 3])),
        ("My rank: [ 4 ] > [1]", 5, Some(vec![4, 1])),
        ("My rank: [1]>[2]\nthen My rank: [3]>[1]", 3, Some(vec![3, 1])),
        ("My rank: [5]", 5, Some(vec![5])),
        ("Answer only, no ranking.", 3, None),
        ("My rank: [0]>[1]", 3, None),
        ("My rank: [4]>[1]", 3, None),
        ("My rank: [1]>[1]", 3, None),
        ("My rank: [a]>[1]", 3, None),
        ("My rank: nothing", 3, None),
    ];
    let rank_ok = rank
        .iter()
        .filter(|(text, k, want)| parse_rank_line(text, *k).ok() == *want)
        .count();

    let data = |body: &str| format!("preamble\n====New data begins====\n{body}\n====New data ends====\n");
    let new_data: Vec<(String, Option<(&str, &str)>)> = vec![
        (
            data("Input: Who founded it?\nReference output: Tarrant"),
            Some(("Who founded it?", "Tarrant")),
        ),
        (
            data("Input:  spaced  \n\nReference output:\n multi\nline "),
            Some(("spaced", "multi\nline")),
        ),
        (
            format!(
                "{}{}",
                data("Input: old\nReference output: x"),
                data("Input: new\nReference output: y")
            ),
            Some(("new", "y")),
        ),
        ("Input: a\nReference output: b".to_string(), None),
        (
            "====New data begins====\nInput: a\nReference output: b".to_string(),
            None,
        ),
        (data("Reference output: b"), None),
        (data("Input: a"), None),
        (data("Reference output: b\nInput: a"), None),
        (data("Input:\nReference output: b"), None),
    ];
    let data_ok = new_data
        .iter()
        .filter(|(text, want)| {
            let got = parse_new_data(text).ok();
            got.as_ref().map(|(a, b)| (a.as_str(), b.as_str())) == *want
        })
        .count();

    let verdicts = [
        ("[YES]", Verdict::Yes),
        ("The data is consistent. [YES]", Verdict::Yes),
        ("[NO] the answer is wrong", Verdict::No),
        ("[YES] ... on reflection [NO]", Verdict::No),
        ("yes", Verdict::Unclear),
        ("", Verdict::Unclear),
        ("[Y E S]", Verdict::Unclear),
    ];
    let verdict_ok = verdicts.iter().filter(|(t, v)| parse_verdict(t) == *v).count();

    let gen = |body: &str| format!("====Generated passage begins====\n{body}\n====Generated passage ends====");
    let generated: Vec<(String, Option<&str>)> = vec![
        (gen("A misleading passage."), Some("A misleading passage.")),
        (format!("Sure!\n{}", gen("  padded  ")), Some("padded")),
        (gen("line one\nline two"), Some("line one\nline two")),
        (gen("   "), None),
        ("A passage with no markers.".to_string(), None),
        ("====Generated passage begins====\nunterminated".to_string(), None),
        ("====Generated passage ends====".to_string(), None),
    ];
    let gen_ok = generated
        .iter()
        .filter(|(t, want)| parse_generated_passage(t).as_deref() == *want)
        .count();

    ensure(
        rank_ok == rank.len() && data_ok == new_data.len() && verdict_ok == verdicts.len() && gen_ok == generated.len(),
        format!(
            "rank {rank_ok}/{}, new data {data_ok}/{}, verdict {verdict_ok}/{}, generated passage {gen_ok}/{}",
            rank.len(),
            new_data.len(),
            verdicts.len(),
            generated.len()
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("surrogate exactness", surrogate_exactness),
        ("brute-force ridge equivalence", brute_force_equivalence),
        ("interaction capture", interaction_capture),
        ("planted GTI benchmark", gti_benchmark),
        ("clustering oracle equivalence", clustering_equivalence),
        ("gradient correctness", gradient_correctness),
        ("end-to-end improvement", end_to_end_improvement),
        ("determinism", determinism),
        ("metric unit suite", metric_suite),
        ("parser conformance", parser_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
