//! Ranking and answer metrics, and the two benchmark drivers.

use serde::{Deserialize, Serialize};

use crate::attribution::{
    attribute_bounded, fit_ridge, llm_rank_attribution, AttributionConfig, Observation, PerturbationVector,
};
use crate::error::{Error, Result};
use crate::oracles::{GeneratorOracle, ScorerOracle};
use crate::text::tokens;
use crate::trainer::ToyEncoder;
use crate::types::{Corpus, GenerationTarget, Passage, QueryText, SharedContext};

/// nDCG@k with linear gains and `log2(i + 1)` discounts; 0 when the ideal
/// DCG is 0.
pub fn ndcg_at_k(ranked_gains: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if let Some(&g) = ranked_gains.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(Error::InvalidGain(g));
    }
    let dcg = |gains: &[f64]| -> f64 {
        gains
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = ranked_gains.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(ranked_gains) / idcg)
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// True when some normalized answer is a substring of the normalized
/// prediction.
pub fn exact_match_accuracy(prediction: &str, answers: &[&str]) -> Result<bool> {
    if answers.is_empty() {
        return Err(Error::InvalidInput("no reference answers".into()));
    }
    let pred = normalize_text(prediction);
    Ok(answers.iter().any(|a| pred.contains(&normalize_text(a))))
}

fn f1(common: usize, pred: usize, refr: usize) -> f64 {
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred as f64;
    let r = common as f64 / refr as f64;
    2.0 * p * r / (p + r)
}

/// Bag-of-tokens F1.
pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    let pred = tokens(prediction);
    let refr = tokens(reference);
    if pred.is_empty() || refr.is_empty() {
        return if pred.is_empty() && refr.is_empty() { 1.0 } else { 0.0 };
    }
    let mut left = refr.clone();
    let mut common = 0;
    for t in &pred {
        if let Some(i) = left.iter().position(|x| x == t) {
            left.swap_remove(i);
            common += 1;
        }
    }
    f1(common, pred.len(), refr.len())
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-L F1 over normalized tokens.
pub fn rouge_l(prediction: &str, reference: &str) -> f64 {
    let pred = tokens(prediction);
    let refr = tokens(reference);
    if pred.is_empty() || refr.is_empty() {
        return 0.0;
    }
    f1(lcs(&pred, &refr), pred.len(), refr.len())
}

/// One GTI-format instance: ten passages with graded relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct GtiInstance {
    pub query: QueryText,
    pub ground_truth: String,
    pub passages: Vec<Passage>,
    pub gains: Vec<f64>,
}

pub const GTI_PASSAGES: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtiRecord {
    pub query: String,
    pub ground_truth: String,
    pub passages: Vec<Passage>,
    pub gains: Vec<f64>,
}

impl GtiInstance {
    pub fn new(query: QueryText, ground_truth: &str, passages: Vec<Passage>, gains: Vec<f64>) -> Result<Self> {
        if passages.len() != GTI_PASSAGES {
            return Err(Error::InvalidInput(format!(
                "GTI instance needs {GTI_PASSAGES} passages, got {}",
                passages.len()
            )));
        }
        if gains.len() != passages.len() {
            return Err(Error::DimensionMismatch {
                expected: passages.len(),
                actual: gains.len(),
            });
        }
        if let Some(&g) = gains.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::InvalidGain(g));
        }
        GenerationTarget::new(query.clone(), ground_truth)?;
        Ok(GtiInstance {
            query,
            ground_truth: ground_truth.to_string(),
            passages,
            gains,
        })
    }

    pub fn from_record(r: GtiRecord) -> Result<Self> {
        GtiInstance::new(QueryText::bare(&r.query)?, &r.ground_truth, r.passages, r.gains)
    }

    pub fn context(&self, id: usize) -> Result<SharedContext> {
        SharedContext::new(format!("gti{id}"), self.passages.clone(), "gti")
    }
}

/// Produces a best-first ordering (0-based) of an instance's passages.
pub trait PassageRanker: Sync {
    fn name(&self) -> &str;
    fn rank(&self, id: usize, instance: &GtiInstance) -> Result<Vec<usize>>;
}

/// Order by descending score; equal scores keep passage order.
pub fn order_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Ranks by the perturbation-regression utility scores.
pub struct PerturbationRanker<'a> {
    pub oracle: &'a dyn ScorerOracle,
    pub config: AttributionConfig,
    pub max_inflight: usize,
}

impl PassageRanker for PerturbationRanker<'_> {
    fn name(&self) -> &str {
        "perturbation"
    }

    fn rank(&self, id: usize, inst: &GtiInstance) -> Result<Vec<usize>> {
        let target = GenerationTarget::new(inst.query.clone(), &inst.ground_truth)?;
        let report = attribute_bounded(
            &inst.context(id)?,
            &target,
            &self.config,
            self.oracle,
            self.max_inflight,
        )?;
        Ok(order_by_scores(&report.scores))
    }
}

/// Fits the surrogate on every one of the `2^k` perturbations. For
/// cross-checking on small instances.
pub struct ExhaustiveRanker<'a> {
    pub oracle: &'a dyn ScorerOracle,
    pub lambda: f64,
}

/// All `2^k` binary vectors, in counting order.
pub fn all_perturbations(k: usize) -> Result<Vec<PerturbationVector>> {
    if k == 0 || k > 20 {
        return Err(Error::InvalidInput(format!(
            "exhaustive design needs 1 <= k <= 20, got {k}"
        )));
    }
    (0..1u32 << k)
        .map(|m| PerturbationVector::new((0..k).map(|i| ((m >> i) & 1) as u8).collect()))
        .collect()
}

impl PassageRanker for ExhaustiveRanker<'_> {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn rank(&self, _: usize, inst: &GtiInstance) -> Result<Vec<usize>> {
        let target = GenerationTarget::new(inst.query.clone(), &inst.ground_truth)?;
        let k = inst.passages.len();
        let obs = all_perturbations(k)?
            .into_iter()
            .map(|v| {
                let kept = v.apply(&inst.passages);
                let z = self
                    .oracle
                    .score_ground_truth(&kept, &inst.query, &target)?
                    .iter()
                    .sum();
                Ok(Observation { vector: v, z })
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, scores) = fit_ridge(&obs, k, self.lambda, false)?;
        Ok(order_by_scores(&scores))
    }
}

/// Ranks by the generator's own `My rank:` line. Passages it leaves out
/// follow in their original order.
pub struct LlmRankRanker<'a> {
    pub oracle: &'a dyn GeneratorOracle,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl PassageRanker for LlmRankRanker<'_> {
    fn name(&self) -> &str {
        "llm_rank"
    }

    fn rank(&self, id: usize, inst: &GtiInstance) -> Result<Vec<usize>> {
        let listed = llm_rank_attribution(
            &inst.context(id)?,
            &inst.query,
            self.oracle,
            self.temperature,
            self.max_tokens,
        )?;
        let mut order: Vec<usize> = listed.iter().map(|i| i - 1).collect();
        for i in 0..inst.passages.len() {
            if !order.contains(&i) {
                order.push(i);
            }
        }
        Ok(order)
    }
}

/// Uses externally supplied scores, e.g. the gains themselves.
pub struct ScoreRanker<F>(pub F);

impl<F: Fn(&GtiInstance) -> Vec<f64> + Sync> PassageRanker for ScoreRanker<F> {
    fn name(&self) -> &str {
        "custom"
    }

    fn rank(&self, _: usize, inst: &GtiInstance) -> Result<Vec<usize>> {
        Ok(order_by_scores(&(self.0)(inst)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtiResult {
    pub attributor: String,
    pub k: usize,
    pub mean_ndcg: f64,
    pub failures: usize,
}

/// Mean nDCG@k per requested k. A failed instance scores 0 and is counted.
pub fn run_gti_benchmark(
    instances: &[GtiInstance],
    ranker: &dyn PassageRanker,
    ks: &[usize],
) -> Result<Vec<GtiResult>> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("no GTI instances".into()));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut sums = vec![0.0; ks.len()];
    let mut failures = 0;
    for (id, inst) in instances.iter().enumerate() {
        match ranker.rank(id, inst) {
            Ok(order) => {
                let ranked: Vec<f64> = order.iter().map(|&i| inst.gains[i]).collect();
                for (s, &k) in sums.iter_mut().zip(ks) {
                    *s += ndcg_at_k(&ranked, k)?;
                }
            }
            Err(e) => {
                if matches!(e.root(), Error::OracleUnavailable(_)) {
                    return Err(e);
                }
                log::warn!("GTI instance {id}: {e}");
                failures += 1;
            }
        }
    }
    let n = instances.len() as f64;
    Ok(ks
        .iter()
        .zip(sums)
        .map(|(&k, s)| GtiResult {
            attributor: ranker.name().to_string(),
            k,
            mean_ndcg: s / n,
            failures,
        })
        .collect())
}

/// `retrieval_eval.jsonl` line: a query, its candidate passages and their gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalRecord {
    pub query: String,
    pub passage_ids: Vec<String>,
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalEvalInstance {
    pub query: String,
    pub candidates: Vec<Passage>,
    pub gains: Vec<f64>,
}

impl RetrievalEvalInstance {
    pub fn resolve(record: &RetrievalEvalRecord, corpus: &Corpus) -> Result<Self> {
        if record.passage_ids.len() != record.gains.len() {
            return Err(Error::DimensionMismatch {
                expected: record.passage_ids.len(),
                actual: record.gains.len(),
            });
        }
        Ok(RetrievalEvalInstance {
            query: record.query.clone(),
            candidates: record
                .passage_ids
                .iter()
                .map(|id| corpus.lookup(id).cloned())
                .collect::<Result<_>>()?,
            gains: record.gains.clone(),
        })
    }
}

/// Anything that scores a query against a passage text.
pub trait Relevance {
    fn relevance(&self, query: &str, passage: &str) -> f64;
}

impl Relevance for ToyEncoder {
    fn relevance(&self, query: &str, passage: &str) -> f64 {
        self.score(query, passage)
    }
}

impl<F: Fn(&str, &str) -> f64> Relevance for F {
    fn relevance(&self, query: &str, passage: &str) -> f64 {
        self(query, passage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalResult {
    pub k: usize,
    pub mean_ndcg: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Mean nDCG@k of ranking each instance's candidates by `model`. Instances
/// without candidates are skipped and counted.
pub fn run_retrieval_eval(
    model: &dyn Relevance,
    instances: &[RetrievalEvalInstance],
    k: usize,
) -> Result<RetrievalEvalResult> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for inst in instances {
        if inst.candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let scores: Vec<f64> = inst
            .candidates
            .iter()
            .map(|p| model.relevance(&inst.query, p.text()))
            .collect();
        let ranked: Vec<f64> = order_by_scores(&scores).iter().map(|&i| inst.gains[i]).collect();
        sum += ndcg_at_k(&ranked, k)?;
        evaluated += 1;
    }
    Ok(RetrievalEvalResult {
        k,
        mean_ndcg: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
        evaluated,
        skipped,
    })
}
