//! Domain types shared by every stage, and their line-delimited JSON records.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of whitespace-separated words in `text`.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassageSource {
    #[default]
    Corpus,
    SyntheticNoise,
}

/// A retrievable unit of text.
///
/// `word_count` is derived from `text` at construction and cannot drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PassageRecord", into = "PassageRecord")]
pub struct Passage {
    id: String,
    text: String,
    source: PassageSource,
    word_count: usize,
}

#[derive(Serialize, Deserialize)]
struct PassageRecord {
    id: String,
    text: String,
    #[serde(default)]
    source: PassageSource,
}

impl TryFrom<PassageRecord> for Passage {
    type Error = Error;

    fn try_from(r: PassageRecord) -> Result<Self> {
        Passage::new(r.id, r.text, r.source)
    }
}

impl From<Passage> for PassageRecord {
    fn from(p: Passage) -> Self {
        PassageRecord {
            id: p.id,
            text: p.text,
            source: p.source,
        }
    }
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: PassageSource) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(Error::InvalidInput("passage id is empty".into()));
        }
        if text.trim().is_empty() {
            return Err(Error::InvalidInput(format!("passage {id} has empty text")));
        }
        let word_count = word_count(&text);
        Ok(Passage {
            id,
            text,
            source,
            word_count,
        })
    }

    pub fn corpus(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        Passage::new(id, text, PassageSource::Corpus)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source(&self) -> PassageSource {
        self.source
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }
}

/// Cuts `text` into consecutive passages of at most `max_words` words.
///
/// Every segment but the last holds exactly `max_words` words; words are
/// re-joined with single spaces. Segment ids are `{doc_id}#{index}`.
pub fn segment_document(doc_id: &str, text: &str, max_words: usize) -> Result<Vec<Passage>> {
    if max_words == 0 {
        return Err(Error::InvalidInput("max_words must be at least 1".into()));
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    words
        .chunks(max_words)
        .enumerate()
        .map(|(i, chunk)| Passage::corpus(format!("{doc_id}#{i}"), chunk.join(" ")))
        .collect()
}

/// One entry of the task pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    /// Generator-facing instruction.
    pub task_instruction: String,
    /// Retriever-facing instruction.
    pub retrieval_instruction: String,
    pub example_input: String,
    pub example_output: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("task_id", &self.task_id),
            ("task_instruction", &self.task_instruction),
            ("retrieval_instruction", &self.retrieval_instruction),
            ("example_input", &self.example_input),
            ("example_output", &self.example_output),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(Error::InvalidInput(format!("task {:?}: {name} is empty", self.task_id)));
            }
        }
        Ok(())
    }
}

/// Checks every task and that task ids are unique in the pool.
pub fn validate_task_pool(tasks: &[TaskSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for task in tasks {
        task.validate()?;
        if !seen.insert(task.task_id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate task id {:?}", task.task_id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    /// Retrieval instruction, a space, then the input.
    Instructed,
    /// Input only.
    Bare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryText {
    pub instruction: Option<String>,
    pub input: String,
    pub rendered: String,
}

impl QueryText {
    pub fn new(instruction: Option<&str>, input: &str) -> Result<Self> {
        if input.trim().is_empty() {
            return Err(Error::InvalidInput("query input is empty".into()));
        }
        let rendered = match instruction {
            Some(i) => format!("{i} {input}"),
            None => input.to_string(),
        };
        Ok(QueryText {
            instruction: instruction.map(str::to_string),
            input: input.to_string(),
            rendered,
        })
    }

    pub fn bare(input: &str) -> Result<Self> {
        QueryText::new(None, input)
    }
}

/// Retriever-facing query for `input` under `task`.
pub fn make_query(task: &TaskSpec, input: &str, mode: QueryMode) -> Result<QueryText> {
    match mode {
        QueryMode::Instructed => QueryText::new(Some(&task.retrieval_instruction), input),
        QueryMode::Bare => QueryText::bare(input),
    }
}

/// Generator-facing query: the task instruction followed by the input.
pub fn generator_query(task: &TaskSpec, input: &str) -> Result<QueryText> {
    QueryText::new(Some(&task.task_instruction), input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedContext {
    pub context_id: String,
    pub passages: Vec<Passage>,
    pub seed_ref: String,
}

impl SharedContext {
    pub fn new(context_id: impl Into<String>, passages: Vec<Passage>, seed_ref: impl Into<String>) -> Result<Self> {
        let context_id = context_id.into();
        if passages.is_empty() {
            return Err(Error::EmptyContext);
        }
        let mut seen = HashSet::new();
        for p in &passages {
            if !seen.insert(p.id()) {
                return Err(Error::InvalidInput(format!(
                    "context {context_id}: duplicate passage id {}",
                    p.id()
                )));
            }
        }
        Ok(SharedContext {
            context_id,
            passages,
            seed_ref: seed_ref.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn to_record(&self) -> ContextRecord {
        ContextRecord {
            context_id: self.context_id.clone(),
            seed_ref: self.seed_ref.clone(),
            passage_ids: self.passages.iter().map(|p| p.id().to_string()).collect(),
        }
    }
}

/// `contexts.jsonl` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub context_id: String,
    pub seed_ref: String,
    pub passage_ids: Vec<String>,
}

/// `seeds.jsonl` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub task_id: String,
    pub input: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVerdict {
    Kept,
    Rejected,
    Unfiltered,
}

/// `synthetic.jsonl` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub task_id: String,
    pub input: String,
    pub ground_truth: String,
    pub context_id: String,
    pub filter_verdict: FilterVerdict,
}

/// A ground truth to be scored by teacher forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTarget {
    pub query: QueryText,
    pub ground_truth: String,
    pub tokenized_truth: Vec<String>,
}

impl GenerationTarget {
    pub fn new(query: QueryText, ground_truth: &str) -> Result<Self> {
        let tokenized_truth: Vec<String> = ground_truth.split_whitespace().map(str::to_string).collect();
        if tokenized_truth.is_empty() {
            return Err(Error::InvalidInput("ground truth is empty".into()));
        }
        Ok(GenerationTarget {
            query,
            ground_truth: ground_truth.to_string(),
            tokenized_truth,
        })
    }
}

/// Positives and negatives for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairSet {
    pub query: QueryText,
    pub positives: Vec<Passage>,
    pub negatives: Vec<Passage>,
}

impl TrainingPairSet {
    /// Rejects passage ids that appear on both sides. Either side may be
    /// empty; use [`TrainingPairSet::is_complete`] before training.
    pub fn new(query: QueryText, positives: Vec<Passage>, negatives: Vec<Passage>) -> Result<Self> {
        let pos: HashSet<&str> = positives.iter().map(Passage::id).collect();
        if let Some(p) = negatives.iter().find(|p| pos.contains(p.id())) {
            return Err(Error::InvalidInput(format!(
                "passage {} is both positive and negative",
                p.id()
            )));
        }
        Ok(TrainingPairSet {
            query,
            positives,
            negatives,
        })
    }

    pub fn is_complete(&self) -> bool {
        !self.positives.is_empty() && !self.negatives.is_empty()
    }

    pub fn to_record(&self) -> PairRecord {
        PairRecord {
            query: self.query.rendered.clone(),
            positives: self.positives.iter().map(|p| p.id().to_string()).collect(),
            negatives: self.negatives.iter().map(|p| p.id().to_string()).collect(),
        }
    }
}

/// `pairs.jsonl` line. The query is stored rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub query: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

/// Passages addressable by id, in load order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for p in passages {
            corpus.insert(p)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, passage: Passage) -> Result<()> {
        if self.by_id.contains_key(passage.id()) {
            return Err(Error::InvalidInput(format!("duplicate passage id {}", passage.id())));
        }
        self.by_id.insert(passage.id().to_string(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Result<&Passage> {
        self.get(id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown passage id {id}")))
    }

    pub fn resolve_context(&self, record: &ContextRecord) -> Result<SharedContext> {
        let passages = record
            .passage_ids
            .iter()
            .map(|id| self.lookup(id).cloned())
            .collect::<Result<Vec<_>>>()?;
        SharedContext::new(record.context_id.clone(), passages, record.seed_ref.clone())
    }

    pub fn resolve_pairs(&self, record: &PairRecord) -> Result<TrainingPairSet> {
        let fetch =
            |ids: &[String]| -> Result<Vec<Passage>> { ids.iter().map(|id| self.lookup(id).cloned()).collect() };
        TrainingPairSet::new(
            QueryText::bare(&record.query)?,
            fetch(&record.positives)?,
            fetch(&record.negatives)?,
        )
    }
}
