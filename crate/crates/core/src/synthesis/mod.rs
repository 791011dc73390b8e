//! Shared-context construction and multi-task data synthesis.
//!
//! Per seed instance: extract entities, expand them one hop, retrieve a
//! shared context with BM25, then ask the generator for one example per task
//! in the pool. Examples are optionally filtered, and one generated noise
//! passage is optionally inserted into each context.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{bounded_map, GeneratorOracle, DEFAULT_MAX_INFLIGHT, DEFAULT_TEMPERATURE};
use crate::prompts::{self, Verdict};
use crate::text::fnv1a64;
use crate::types::{FilterVerdict, Passage, PassageSource, SeedRecord, SharedContext, SyntheticExample, TaskSpec};

mod bm25;
mod graph;

pub use bm25::{bm25_score, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use graph::{expand_entities, sparql_query, EntityGraph, FixtureGraph, WikidataGraph, DEFAULT_SPARQL_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityOrigin {
    Seed,
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub origin: EntityOrigin,
}

/// Entity extraction backend.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Vec<Entity>;
}

/// The built-in title-case heuristic, see [`extract_entities`].
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicExtractor;

impl EntityExtractor for HeuristicExtractor {
    fn extract(&self, text: &str) -> Vec<Entity> {
        extract_entities(text)
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "it", "its", "he", "she", "they", "we", "i", "you", "his",
    "her", "their", "our", "my", "your", "in", "on", "at", "of", "for", "from", "by", "with", "to", "and", "or", "but",
    "if", "as", "is", "are", "was", "were", "be", "there", "here", "what", "which", "who", "whom", "whose", "when",
    "where", "why", "how", "do", "does", "did", "can", "could", "would", "should", "will", "name", "list", "after",
    "before", "during", "while", "since",
];

fn is_title(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Maximal runs of title-case tokens.
///
/// A token with trailing punctuation closes its run. A run made of a single
/// stopword at the start of a sentence is dropped ("The", "Which"). Surfaces
/// are deduplicated, first occurrence wins.
pub fn extract_entities(text: &str) -> Vec<Entity> {
    let mut out: Vec<Entity> = Vec::new();
    let mut seen = HashSet::new();
    let mut run: Vec<&str> = Vec::new();
    let mut run_starts_sentence = false;
    let mut sentence_start = true;

    let mut flush = |run: &mut Vec<&str>, at_start: bool| {
        if run.is_empty() {
            return;
        }
        let single_stop = run.len() == 1 && STOPWORDS.contains(&run[0].to_lowercase().as_str());
        if !(single_stop && at_start) {
            let surface = run.join(" ");
            if seen.insert(surface.clone()) {
                out.push(Entity {
                    surface,
                    origin: EntityOrigin::Seed,
                });
            }
        }
        run.clear();
    };

    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let closes = raw.chars().last().is_some_and(|c| !c.is_alphanumeric());
        let ends_sentence = raw.ends_with(['.', '!', '?']) || raw.ends_with(".\"") || raw.ends_with("?\"");
        if !word.is_empty() && is_title(word) {
            if run.is_empty() {
                run_starts_sentence = sentence_start;
            }
            run.push(word);
            if closes {
                flush(&mut run, run_starts_sentence);
            }
        } else {
            flush(&mut run, run_starts_sentence);
        }
        if !word.is_empty() || ends_sentence {
            sentence_start = ends_sentence;
        }
    }
    flush(&mut run, run_starts_sentence);
    out
}

/// Shared context for `entities`: each entity's `per_entity` best passages
/// are pooled, ranked by their best score over entities, and cut to `total`.
/// Ties go to the lexicographically smaller passage id.
pub fn retrieve_passages(
    entities: &[Entity],
    index: &Bm25Index,
    per_entity: usize,
    total: usize,
    context_id: &str,
    seed_ref: &str,
) -> Result<SharedContext> {
    if index.is_empty() {
        return Err(Error::InvalidInput("BM25 index is empty".into()));
    }
    let mut best: HashMap<usize, f64> = HashMap::new();
    for e in entities {
        for (doc, score) in index.search(&e.surface, per_entity) {
            let slot = best.entry(doc).or_insert(score);
            if score > *slot {
                *slot = score;
            }
        }
    }
    let mut pooled: Vec<(usize, f64)> = best.into_iter().collect();
    pooled.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.passage(a.0).id().cmp(index.passage(b.0).id()))
    });
    pooled.truncate(total);
    let passages: Vec<Passage> = pooled.iter().map(|&(d, _)| index.passage(d).clone()).collect();
    SharedContext::new(context_id, passages, seed_ref)
}

/// Generator sampling settings shared by synthesis, filtering and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 512,
        }
    }
}

/// One synthetic example for `task` grounded in `context`.
pub fn synthesize(
    context: &SharedContext,
    task: &TaskSpec,
    oracle: &dyn GeneratorOracle,
    gen: GenerationParams,
) -> Result<SyntheticExample> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let prompt = prompts::synthesis_prompt(&context.passages, task);
    let reply = oracle.generate(&prompt, gen.temperature, gen.max_tokens)?;
    let (input, ground_truth) = prompts::parse_new_data(&reply)?;
    Ok(SyntheticExample {
        task_id: task.task_id.clone(),
        input,
        ground_truth,
        context_id: context.context_id.clone(),
        filter_verdict: FilterVerdict::Unfiltered,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// `Kept` or `Rejected`.
    pub verdict: FilterVerdict,
    /// Set when the reply had no clear verdict or the oracle failed.
    pub warning: Option<String>,
    pub oracle_error: bool,
}

/// Asks the generator whether `example` is supported by `context`.
/// Anything but a clean `[YES]` rejects.
pub fn filter_example(
    example: &SyntheticExample,
    context: &SharedContext,
    task: &TaskSpec,
    oracle: &dyn GeneratorOracle,
    gen: GenerationParams,
) -> FilterOutcome {
    let prompt = prompts::filter_prompt(example, &context.passages, task);
    match oracle.generate(&prompt, gen.temperature, gen.max_tokens) {
        Ok(reply) => match prompts::parse_verdict(&reply) {
            Verdict::Yes => FilterOutcome {
                verdict: FilterVerdict::Kept,
                warning: None,
                oracle_error: false,
            },
            Verdict::No => FilterOutcome {
                verdict: FilterVerdict::Rejected,
                warning: None,
                oracle_error: false,
            },
            Verdict::Unclear => FilterOutcome {
                verdict: FilterVerdict::Rejected,
                warning: Some(format!("unclear filter verdict: {:?}", truncate(&reply, 80))),
                oracle_error: false,
            },
        },
        Err(e) => FilterOutcome {
            verdict: FilterVerdict::Rejected,
            warning: Some(format!("filter call failed: {e}")),
            oracle_error: true,
        },
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Id given to the noise passage of a context.
pub fn noise_passage_id(context_id: &str) -> String {
    format!("{context_id}#noise")
}

/// Inserts one generated distractor passage at a position drawn from
/// `seed` and the context id. A reply without a passage leaves the context
/// unchanged; oracle errors propagate.
pub fn inject_noise(
    context: &SharedContext,
    example: &SyntheticExample,
    oracle: &dyn GeneratorOracle,
    gen: GenerationParams,
    seed: u64,
) -> Result<SharedContext> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let prompt = prompts::noise_prompt(example, &context.passages);
    let reply = oracle.generate(&prompt, gen.temperature, gen.max_tokens)?;
    let Some(text) = prompts::parse_generated_passage(&reply) else {
        log::warn!(
            "context {}: no generated passage in reply, noise skipped",
            context.context_id
        );
        return Ok(context.clone());
    };
    let noise = Passage::new(
        noise_passage_id(&context.context_id),
        text,
        PassageSource::SyntheticNoise,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(context.context_id.as_bytes()));
    let at = rng.random_range(0..=context.len());
    let mut passages = context.passages.clone();
    passages.insert(at, noise);
    SharedContext::new(context.context_id.clone(), passages, context.seed_ref.clone())
}

/// Up to `per_task` seeds for every task id, drawn with one shared RNG.
/// Kept seeds stay in input order.
pub fn sample_seeds(seeds: &[SeedRecord], per_task: usize, seed: u64) -> Vec<SeedRecord> {
    let mut by_task: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, s) in seeds.iter().enumerate() {
        match by_task.iter_mut().find(|(t, _)| *t == s.task_id) {
            Some((_, v)) => v.push(i),
            None => by_task.push((&s.task_id, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (_, mut idx) in by_task {
        if idx.len() > per_task {
            idx.shuffle(&mut rng);
            idx.truncate(per_task);
        }
        keep.extend(idx);
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| seeds[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisParams {
    pub per_entity: usize,
    pub total: usize,
    pub sparql_limit: usize,
    pub seeds_per_task: usize,
    pub gen: GenerationParams,
    pub filter: bool,
    pub inject_noise: bool,
    pub seed: u64,
    pub max_inflight: usize,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        SynthesisParams {
            per_entity: 10,
            total: 10,
            sparql_limit: DEFAULT_SPARQL_LIMIT,
            seeds_per_task: 1000,
            gen: GenerationParams::default(),
            filter: true,
            inject_noise: true,
            seed: 0,
            max_inflight: DEFAULT_MAX_INFLIGHT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub seeds: usize,
    pub sampled: usize,
    pub no_entities: usize,
    pub empty_context: usize,
    pub contexts: usize,
    pub synthesized: usize,
    pub parse_failures: usize,
    pub kept: usize,
    pub rejected: usize,
    pub unfiltered: usize,
    pub filter_warnings: usize,
    pub noise_injected: usize,
    pub noise_skipped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SynthesisOutput {
    pub contexts: Vec<SharedContext>,
    pub examples: Vec<SyntheticExample>,
    /// Generated passages, to be stored next to the corpus.
    pub noise: Vec<Passage>,
    pub summary: SynthesisSummary,
}

/// Everything one seed instance contributes.
#[derive(Default)]
struct SeedResult {
    context: Option<SharedContext>,
    examples: Vec<SyntheticExample>,
    summary: SynthesisSummary,
}

pub struct Synthesizer<'a> {
    pub tasks: &'a [TaskSpec],
    pub index: &'a Bm25Index,
    pub graph: &'a dyn EntityGraph,
    pub extractor: &'a dyn EntityExtractor,
    pub generator: &'a dyn GeneratorOracle,
    pub params: SynthesisParams,
}

impl Synthesizer<'_> {
    fn one_seed(&self, index: usize, seed: &SeedRecord) -> Result<SeedResult> {
        let mut r = SeedResult::default();
        let mut entities = self.extractor.extract(&seed.input);
        for e in self.extractor.extract(&seed.ground_truth) {
            if !entities.iter().any(|x| x.surface == e.surface) {
                entities.push(e);
            }
        }
        if entities.is_empty() {
            r.summary.no_entities += 1;
            return Ok(r);
        }
        let entities = expand_entities(&entities, self.params.sparql_limit, self.graph);
        let context_id = format!("ctx{index:05}");
        let seed_ref = format!("{}:{index}", seed.task_id);
        let context = match retrieve_passages(
            &entities,
            self.index,
            self.params.per_entity,
            self.params.total,
            &context_id,
            &seed_ref,
        ) {
            Ok(c) => c,
            Err(Error::EmptyContext) => {
                r.summary.empty_context += 1;
                return Ok(r);
            }
            Err(e) => return Err(e),
        };
        let gen = self.params.gen;
        for task in self.tasks {
            let mut ex = match synthesize(&context, task, self.generator, gen) {
                Ok(ex) => ex,
                Err(Error::SynthesisParseError(msg)) => {
                    log::warn!("{context_id}/{}: {msg}", task.task_id);
                    r.summary.parse_failures += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            r.summary.synthesized += 1;
            if self.params.filter {
                let outcome = filter_example(&ex, &context, task, self.generator, gen);
                if let Some(w) = &outcome.warning {
                    log::warn!("{context_id}/{}: {w}", task.task_id);
                    r.summary.filter_warnings += 1;
                }
                ex.filter_verdict = outcome.verdict;
            }
            match ex.filter_verdict {
                FilterVerdict::Kept => r.summary.kept += 1,
                FilterVerdict::Rejected => r.summary.rejected += 1,
                FilterVerdict::Unfiltered => r.summary.unfiltered += 1,
            }
            r.examples.push(ex);
        }
        if r.examples.is_empty() {
            return Ok(r);
        }
        let mut context = context;
        if self.params.inject_noise {
            let usable = r.examples.iter().find(|e| e.filter_verdict != FilterVerdict::Rejected);
            if let Some(ex) = usable {
                let before = context.len();
                context = inject_noise(&context, ex, self.generator, gen, self.params.seed)?;
                if context.len() > before {
                    r.summary.noise_injected += 1;
                } else {
                    r.summary.noise_skipped += 1;
                }
            }
        }
        r.summary.contexts += 1;
        r.context = Some(context);
        Ok(r)
    }

    /// Runs every sampled seed; seeds are processed concurrently and results
    /// are gathered in input order.
    pub fn run(&self, seeds: &[SeedRecord]) -> Result<SynthesisOutput> {
        crate::types::validate_task_pool(self.tasks)?;
        if self.tasks.is_empty() {
            return Err(Error::InvalidInput("task pool is empty".into()));
        }
        let sampled = sample_seeds(seeds, self.params.seeds_per_task, self.params.seed);
        let results = bounded_map(&sampled, self.params.max_inflight, |i, s| self.one_seed(i, s));
        let mut out = SynthesisOutput {
            summary: SynthesisSummary {
                seeds: seeds.len(),
                sampled: sampled.len(),
                ..Default::default()
            },
            ..Default::default()
        };
        for r in results {
            let r = r?;
            add(&mut out.summary, &r.summary);
            if let Some(c) = r.context {
                out.noise.extend(
                    c.passages
                        .iter()
                        .filter(|p| p.source() == PassageSource::SyntheticNoise)
                        .cloned(),
                );
                out.contexts.push(c);
            }
            out.examples.extend(r.examples);
        }
        Ok(out)
    }
}

fn add(total: &mut SynthesisSummary, part: &SynthesisSummary) {
    total.no_entities += part.no_entities;
    total.empty_context += part.empty_context;
    total.contexts += part.contexts;
    total.synthesized += part.synthesized;
    total.parse_failures += part.parse_failures;
    total.kept += part.kept;
    total.rejected += part.rejected;
    total.unfiltered += part.unfiltered;
    total.filter_warnings += part.filter_warnings;
    total.noise_injected += part.noise_injected;
    total.noise_skipped += part.noise_skipped;
}
