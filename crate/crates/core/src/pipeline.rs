//! Stage commands over a [`RunConfig`].
//!
//! Every stage reads its inputs from configured paths or from earlier
//! stages' files in `out_dir`, writes its artifacts there, and leaves a
//! `summary_<stage>.json` and a `manifest_<stage>.json` next to them.
//! Running `e2e` is the same as running the five stages in order.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::attribution::{attribute_bounded, AttributionConfig, UtilityReport};
use crate::config::{AttributorKind, OracleMode, RunConfig};
use crate::error::{Error, Result};
use crate::evalkit::{
    run_gti_benchmark, run_retrieval_eval, GtiInstance, GtiRecord, LlmRankRanker, PassageRanker, PerturbationRanker,
    RetrievalEvalInstance, RetrievalEvalRecord,
};
use crate::jsonl::{read_json, read_jsonl, write_json, write_jsonl};
use crate::oracles::mock::MockRules;
use crate::oracles::{
    ContextLmScorer, GeneratorOracle, HttpGenerator, HttpOptions, HttpScorer, MockGenerator, ScorerOracle,
};
use crate::sampling::{emit_training_pairs, select_pairs, SampleSummary};
use crate::synthesis::{Bm25Index, EntityGraph, FixtureGraph, HeuristicExtractor, Synthesizer, WikidataGraph};
use crate::trainer::{train, write_loss_csv, ToyEncoder};
use crate::types::{
    generator_query, make_query, segment_document, ContextRecord, Corpus, FilterVerdict, GenerationTarget, PairRecord,
    Passage, QueryMode, SeedRecord, SyntheticExample, TaskSpec,
};

pub const CONTEXTS: &str = "contexts.jsonl";
pub const SYNTHETIC: &str = "synthetic.jsonl";
pub const NOISE: &str = "noise_passages.jsonl";
pub const REPORTS: &str = "reports.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const MODEL: &str = "model.bin";
pub const LOSS: &str = "loss.csv";
pub const METRICS: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synthesize,
    Attribute,
    Sample,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Synthesize,
        Stage::Attribute,
        Stage::Sample,
        Stage::Train,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synthesize => "synthesize",
            Stage::Attribute => "attribute",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

/// The scorer and generator a run talks to.
pub struct Oracles {
    pub scorer: Box<dyn ScorerOracle>,
    pub generator: Box<dyn GeneratorOracle>,
}

impl Oracles {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match cfg.oracle.mode {
            OracleMode::Mock => {
                let rules: MockRules = match &cfg.oracle.mock_rules {
                    Some(p) => read_json(&cfg.resolve(p))?,
                    None => MockRules::default(),
                };
                Ok(Oracles {
                    scorer: Box::new(ContextLmScorer::default()),
                    generator: Box::new(MockGenerator::new(cfg.runtime.seed, rules)),
                })
            }
            OracleMode::Http => {
                let opts = http_options(cfg);
                let (Some(score), Some(gen)) = (&cfg.oracle.score_url, &cfg.oracle.generate_url) else {
                    return Err(Error::InvalidConfig(
                        "http oracles need score_url and generate_url".into(),
                    ));
                };
                Ok(Oracles {
                    scorer: Box::new(HttpScorer::new(score.clone(), opts.clone())),
                    generator: Box::new(HttpGenerator::new(gen.clone(), opts)),
                })
            }
        }
    }
}

fn http_options(cfg: &RunConfig) -> HttpOptions {
    HttpOptions {
        attempts: cfg.oracle.attempts.max(1),
        timeout: Duration::from_secs(cfg.oracle.timeout_secs.max(1)),
        ..HttpOptions::from_env()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// sha256 of every file read, keyed by config key or output name.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files one stage reads and writes, for the manifest.
struct Io<'a> {
    cfg: &'a RunConfig,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<(String, PathBuf)>,
}

impl<'a> Io<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Io {
            cfg,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// A configured input that must exist.
    fn need(&mut self, key: &str) -> Result<PathBuf> {
        let p = self.cfg.input(key)?;
        self.add_input(format!("paths.{key}"), p)
    }

    /// A configured input that may be unset; when set it must exist.
    fn maybe(&mut self, key: &str) -> Result<Option<PathBuf>> {
        match self.cfg.input(key) {
            Ok(p) => self.add_input(format!("paths.{key}"), p).map(Some),
            Err(Error::InvalidConfig(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// An artifact of an earlier stage.
    fn upstream(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.cfg.out(name);
        self.add_input(format!("out/{name}"), p)
    }

    fn add_input(&mut self, key: String, p: PathBuf) -> Result<PathBuf> {
        if !p.is_file() {
            return Err(Error::MissingInput(p));
        }
        self.inputs.push((key, p.clone()));
        Ok(p)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.cfg.out(name);
        self.outputs.push((name.to_string(), p.clone()));
        p
    }

    fn finish(self, stage: Stage, summary: &Value) -> Result<()> {
        let digest = |list: &[(String, PathBuf)]| -> Result<BTreeMap<String, String>> {
            list.iter().map(|(k, p)| Ok((k.clone(), sha256_file(p)?))).collect()
        };
        write_json(&self.cfg.out(&format!("summary_{}.json", stage.name())), summary)?;
        let mut versions = BTreeMap::new();
        versions.insert("scarlet-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest".to_string(), "1".to_string());
        let manifest = Manifest {
            stage: stage.name().to_string(),
            config_hash: self.cfg.hash(),
            seed: self.cfg.runtime.seed,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            versions,
        };
        write_json(&self.cfg.out(&format!("manifest_{}.json", stage.name())), &manifest)
    }
}

#[derive(Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
}

/// Corpus passages, then segmented documents, then (optionally) the noise
/// passages written by synthesis.
fn load_corpus(io: &mut Io<'_>, with_noise: bool) -> Result<Corpus> {
    let mut passages: Vec<Passage> = read_jsonl(&io.need("corpus")?)?;
    if let Some(docs) = io.maybe("documents")? {
        for d in read_jsonl::<DocumentRecord>(&docs)? {
            passages.extend(segment_document(&d.id, &d.text, io.cfg.synthesis.max_words)?);
        }
    }
    if with_noise {
        passages.extend(read_jsonl::<Passage>(&io.upstream(NOISE)?)?);
    }
    Corpus::new(passages)
}

fn load_tasks(io: &mut Io<'_>) -> Result<HashMap<String, TaskSpec>> {
    let tasks: Vec<TaskSpec> = read_jsonl(&io.need("tasks")?)?;
    crate::types::validate_task_pool(&tasks)?;
    Ok(tasks.into_iter().map(|t| (t.task_id.clone(), t)).collect())
}

fn task<'t>(tasks: &'t HashMap<String, TaskSpec>, id: &str) -> Result<&'t TaskSpec> {
    tasks
        .get(id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown task id {id:?}")))
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(cfg.out_dir())?;
    Ok(())
}

pub fn cmd_synthesize(cfg: &RunConfig) -> Result<Value> {
    prepare(cfg)?;
    let mut io = Io::new(cfg);
    let corpus = load_corpus(&mut io, false)?;
    let tasks_path = io.need("tasks")?;
    let tasks: Vec<TaskSpec> = read_jsonl(&tasks_path)?;
    let seeds: Vec<SeedRecord> = read_jsonl(&io.need("seeds")?)?;
    let fixture = io.maybe("wikidata_fixture")?;
    io.maybe("mock_rules")?;
    let graph: Box<dyn EntityGraph> = match (&fixture, &cfg.synthesis.sparql_url, &cfg.synthesis.search_url) {
        (Some(p), _, _) => Box::new(FixtureGraph::new(read_json(p)?)),
        (None, Some(sparql), Some(search)) => {
            Box::new(WikidataGraph::new(search.clone(), sparql.clone(), http_options(cfg)))
        }
        _ => {
            log::warn!("no entity graph configured, entities are not expanded");
            Box::new(FixtureGraph::default())
        }
    };
    let oracles = Oracles::from_config(cfg)?;
    let index = Bm25Index::build(corpus.passages().to_vec())?;
    let synth = Synthesizer {
        tasks: &tasks,
        index: &index,
        graph: graph.as_ref(),
        extractor: &HeuristicExtractor,
        generator: oracles.generator.as_ref(),
        params: cfg.synthesis_params(),
    };
    let out = synth.run(&seeds).map_err(|e| e.in_stage("synthesize"))?;
    let records: Vec<ContextRecord> = out.contexts.iter().map(|c| c.to_record()).collect();
    write_jsonl(&io.output(CONTEXTS), &records)?;
    write_jsonl(&io.output(SYNTHETIC), &out.examples)?;
    write_jsonl(&io.output(NOISE), &out.noise)?;
    let summary = serde_json::to_value(&out.summary)?;
    io.finish(Stage::Synthesize, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Default, Serialize)]
struct AttributeSummary {
    examples: usize,
    attributed: usize,
    skipped_rejected: usize,
    failures: usize,
}

pub fn cmd_attribute(cfg: &RunConfig) -> Result<Value> {
    prepare(cfg)?;
    let mut io = Io::new(cfg);
    let contexts: Vec<ContextRecord> = read_jsonl(&io.upstream(CONTEXTS)?)?;
    let examples: Vec<SyntheticExample> = read_jsonl(&io.upstream(SYNTHETIC)?)?;
    let corpus = load_corpus(&mut io, true)?;
    let tasks = load_tasks(&mut io)?;
    io.maybe("mock_rules")?;
    let oracles = Oracles::from_config(cfg)?;
    let by_id: HashMap<&str, &ContextRecord> = contexts.iter().map(|c| (c.context_id.as_str(), c)).collect();
    let base = cfg.attribution_config();
    let mut summary = AttributeSummary {
        examples: examples.len(),
        ..Default::default()
    };
    let mut reports: Vec<UtilityReport> = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        if ex.filter_verdict == FilterVerdict::Rejected {
            summary.skipped_rejected += 1;
            continue;
        }
        let record = by_id
            .get(ex.context_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("example {i}: unknown context {}", ex.context_id)))?;
        let context = corpus.resolve_context(record)?;
        let query = generator_query(task(&tasks, &ex.task_id)?, &ex.input)?;
        let target = GenerationTarget::new(query, &ex.ground_truth)?;
        let config = AttributionConfig {
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        match attribute_bounded(
            &context,
            &target,
            &config,
            oracles.scorer.as_ref(),
            cfg.runtime.max_inflight,
        ) {
            Ok(mut r) => {
                r.example_index = Some(i);
                reports.push(r);
                summary.attributed += 1;
            }
            Err(e) if matches!(e.root(), Error::OracleUnavailable(_)) => return Err(e.in_stage("attribute")),
            Err(e) => {
                log::warn!("example {i} ({}): {e}", ex.context_id);
                summary.failures += 1;
            }
        }
    }
    write_jsonl(&io.output(REPORTS), &reports)?;
    let summary = serde_json::to_value(&summary)?;
    io.finish(Stage::Attribute, &summary)?;
    Ok(summary)
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<Value> {
    prepare(cfg)?;
    let mut io = Io::new(cfg);
    let reports: Vec<UtilityReport> = read_jsonl(&io.upstream(REPORTS)?)?;
    let examples: Vec<SyntheticExample> = read_jsonl(&io.upstream(SYNTHETIC)?)?;
    let contexts: Vec<ContextRecord> = read_jsonl(&io.upstream(CONTEXTS)?)?;
    let corpus = load_corpus(&mut io, true)?;
    let tasks = load_tasks(&mut io)?;
    let by_id: HashMap<&str, &ContextRecord> = contexts.iter().map(|c| (c.context_id.as_str(), c)).collect();
    let mut instances = Vec::with_capacity(reports.len());
    let mut fallbacks = 0;
    for r in &reports {
        let i = r
            .example_index
            .ok_or_else(|| Error::InvalidInput(format!("report for {} lacks example_index", r.context_id)))?;
        let ex = examples
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("report refers to missing example {i}")))?;
        let record = by_id
            .get(r.context_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("unknown context {}", r.context_id)))?;
        let context = corpus.resolve_context(record)?;
        let query = make_query(task(&tasks, &ex.task_id)?, &ex.input, QueryMode::Instructed)?;
        let sel = select_pairs(r, &context, &query, cfg.sampling.strategy)?;
        if sel.fallback {
            fallbacks += 1;
        }
        instances.push((ex.clone(), sel.pairs));
    }
    let out = BufWriter::new(File::create(io.output(PAIRS))?);
    let summary = SampleSummary {
        fallbacks,
        ..emit_training_pairs(&instances, out)?
    };
    let summary = serde_json::to_value(summary)?;
    io.finish(Stage::Sample, &summary)?;
    Ok(summary)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Value> {
    prepare(cfg)?;
    let mut io = Io::new(cfg);
    let records: Vec<PairRecord> = read_jsonl(&io.upstream(PAIRS)?)?;
    let corpus = load_corpus(&mut io, true)?;
    let pairs = records
        .iter()
        .map(|r| corpus.resolve_pairs(r))
        .collect::<Result<Vec<_>>>()?;
    let tc = cfg.train_config();
    let mut encoder = ToyEncoder::from_config(&tc)?;
    let report = train(&mut encoder, &pairs, &tc).map_err(|e| e.in_stage("train"))?;
    encoder.save(&io.output(MODEL))?;
    write_loss_csv(&report, BufWriter::new(File::create(io.output(LOSS))?))?;
    let summary = json!({
        "pair_sets": pairs.len(),
        "steps": report.steps,
        "initial_loss": report.initial_loss,
        "epoch_losses": report.epoch_losses,
    });
    io.finish(Stage::Train, &summary)?;
    Ok(summary)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Value> {
    prepare(cfg)?;
    let mut io = Io::new(cfg);
    let retrieval = io.maybe("retrieval_eval")?;
    let gti = io.maybe("gti")?;
    if retrieval.is_none() && gti.is_none() {
        return Err(Error::InvalidConfig(
            "eval needs paths.retrieval_eval or paths.gti".into(),
        ));
    }
    let mut metrics = serde_json::Map::new();
    if let Some(path) = retrieval {
        let encoder = ToyEncoder::load(&io.upstream(MODEL)?)?;
        let corpus = load_corpus(&mut io, false)?;
        let instances = read_jsonl::<RetrievalEvalRecord>(&path)?
            .iter()
            .map(|r| RetrievalEvalInstance::resolve(r, &corpus))
            .collect::<Result<Vec<_>>>()?;
        let k = cfg.eval.top_k;
        let baseline = ToyEncoder::from_config(&cfg.train_config())?;
        let before = run_retrieval_eval(&baseline, &instances, k)?;
        let after = run_retrieval_eval(&encoder, &instances, k)?;
        metrics.insert(
            "retrieval".into(),
            json!({
                "k": k,
                "baseline_ndcg": before.mean_ndcg,
                "trained_ndcg": after.mean_ndcg,
                "improvement": after.mean_ndcg - before.mean_ndcg,
                "evaluated": after.evaluated,
                "skipped": after.skipped,
            }),
        );
    }
    if let Some(path) = gti {
        io.maybe("mock_rules")?;
        let instances = read_jsonl::<GtiRecord>(&path)?
            .into_iter()
            .map(GtiInstance::from_record)
            .collect::<Result<Vec<_>>>()?;
        let oracles = Oracles::from_config(cfg)?;
        let ranker: Box<dyn PassageRanker + '_> = match cfg.eval.attributor {
            AttributorKind::Perturbation => Box::new(PerturbationRanker {
                oracle: oracles.scorer.as_ref(),
                config: cfg.attribution_config(),
                max_inflight: cfg.runtime.max_inflight,
            }),
            AttributorKind::LlmRank => Box::new(LlmRankRanker {
                oracle: oracles.generator.as_ref(),
                temperature: cfg.synthesis.temperature,
                max_tokens: cfg.synthesis.max_tokens,
            }),
        };
        let results = run_gti_benchmark(&instances, ranker.as_ref(), &cfg.eval.ks).map_err(|e| e.in_stage("eval"))?;
        metrics.insert("gti".into(), serde_json::to_value(results)?);
    }
    let metrics = Value::Object(metrics);
    write_json(&io.output(METRICS), &metrics)?;
    io.finish(Stage::Eval, &metrics)?;
    Ok(metrics)
}

pub fn run_stage(stage: Stage, cfg: &RunConfig) -> Result<Value> {
    match stage {
        Stage::Synthesize => cmd_synthesize(cfg),
        Stage::Attribute => cmd_attribute(cfg),
        Stage::Sample => cmd_sample(cfg),
        Stage::Train => cmd_train(cfg),
        Stage::Eval => cmd_eval(cfg),
    }
}

/// All five stages in order; the summaries keyed by stage name.
pub fn cmd_e2e(cfg: &RunConfig) -> Result<Value> {
    let mut all = serde_json::Map::new();
    for stage in Stage::ALL {
        all.insert(stage.name().into(), run_stage(stage, cfg)?);
    }
    Ok(Value::Object(all))
}

/// Machine-readable form of an error for stderr.
pub fn error_json(e: &Error) -> Value {
    json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    })
}
