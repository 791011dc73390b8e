//! Python bindings. Passages cross the boundary as `(id, text)` tuples and
//! pipeline summaries as JSON strings.

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use scarlet_core::attribution::{
    attribute, fit_ridge as core_fit_ridge, AttributionConfig, Observation, PerturbationVector,
};
use scarlet_core::config::RunConfig;
use scarlet_core::oracles::mock::{LinearMockScorer, LinearMockSpec};
use scarlet_core::pipeline::{cmd_e2e, run_stage as core_run_stage, Stage};
use scarlet_core::sampling::ClusterLabel;
use scarlet_core::synthesis::Bm25Index as CoreBm25;
use scarlet_core::trainer::ToyEncoder as CoreEncoder;
use scarlet_core::{evalkit, prompts, sampling, trainer, Error, GenerationTarget, Passage, QueryText, SharedContext};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::MissingInput(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::InvalidInput(_)
        | Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidGain(_)
        | Error::InsufficientSeparation { .. }
        | Error::RankParseError { .. }
        | Error::SynthesisParseError(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn passages(items: Vec<(String, String)>) -> PyResult<Vec<Passage>> {
    items
        .into_iter()
        .map(|(id, text)| Passage::corpus(id, text).map_err(to_py))
        .collect()
}

/// Splits a document into passages of at most `max_words` words.
#[pyfunction]
#[pyo3(signature = (doc_id, text, max_words = 100))]
fn segment_document(doc_id: &str, text: &str, max_words: usize) -> PyResult<Vec<(String, String)>> {
    let out = scarlet_core::segment_document(doc_id, text, max_words).map_err(to_py)?;
    Ok(out.iter().map(|p| (p.id().to_string(), p.text().to_string())).collect())
}

/// Labels each score `"positive"`, `"discard"` or `"negative"`; also
/// returns the three cluster means.
#[pyfunction]
fn cluster_1d(scores: Vec<f64>) -> PyResult<(Vec<&'static str>, [f64; 3])> {
    let a = sampling::cluster_1d(&scores).map_err(to_py)?;
    let labels = a
        .labels
        .iter()
        .map(|l| match l {
            ClusterLabel::Positive => "positive",
            ClusterLabel::Discard => "discard",
            ClusterLabel::Negative => "negative",
        })
        .collect();
    Ok((labels, a.centroids))
}

/// Ridge fit on explicit observations; returns `(intercept, scores)`.
#[pyfunction]
#[pyo3(signature = (vectors, z, lam = 1.0, penalize_intercept = true))]
fn fit_ridge(vectors: Vec<Vec<u8>>, z: Vec<f64>, lam: f64, penalize_intercept: bool) -> PyResult<(f64, Vec<f64>)> {
    if vectors.len() != z.len() {
        return Err(PyValueError::new_err("vectors and z differ in length"));
    }
    let k = vectors.first().map_or(0, Vec::len);
    let obs = vectors
        .into_iter()
        .zip(z)
        .map(|(v, z)| {
            Ok(Observation {
                vector: PerturbationVector::new(v).map_err(to_py)?,
                z,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    core_fit_ridge(&obs, k, lam, penalize_intercept).map_err(to_py)
}

/// Attributes a planted additive model: samples `n` perturbations, scores
/// them with the model and fits the surrogate. Interactions are 1-based
/// `(i, j, weight)` triples.
#[pyfunction]
#[pyo3(signature = (intercept, effects, interactions = Vec::new(), noise_sigma = 0.0, n = 64, p = 0.5, lam = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn attribute_planted(
    intercept: f64,
    effects: Vec<f64>,
    interactions: Vec<(usize, usize, f64)>,
    noise_sigma: f64,
    n: usize,
    p: f64,
    lam: f64,
    seed: u64,
) -> PyResult<(f64, Vec<f64>)> {
    let k = effects.len();
    let ids: Vec<String> = (0..k).map(|i| format!("p{i}")).collect();
    let spec = LinearMockSpec {
        intercept,
        main_effects: effects,
        interactions,
        noise_sigma,
        seed,
    };
    let oracle = LinearMockScorer::new(spec, ids.clone()).map_err(to_py)?;
    let ps = passages(ids.iter().map(|id| (id.clone(), id.clone())).collect())?;
    let ctx = SharedContext::new("planted", ps, "planted").map_err(to_py)?;
    let target = GenerationTarget::new(QueryText::bare("q").map_err(to_py)?, "a").map_err(to_py)?;
    let cfg = AttributionConfig {
        n,
        p,
        lambda: lam,
        penalize_intercept: true,
        seed,
    };
    let r = attribute(&ctx, &target, &cfg, &oracle).map_err(to_py)?;
    Ok((r.intercept, r.scores))
}

#[pyfunction]
fn ndcg_at_k(ranked_gains: Vec<f64>, k: usize) -> PyResult<f64> {
    evalkit::ndcg_at_k(&ranked_gains, k).map_err(to_py)
}

#[pyfunction]
fn exact_match(prediction: &str, answers: Vec<String>) -> PyResult<bool> {
    let refs: Vec<&str> = answers.iter().map(String::as_str).collect();
    evalkit::exact_match_accuracy(prediction, &refs).map_err(to_py)
}

#[pyfunction]
fn token_f1(prediction: &str, reference: &str) -> f64 {
    evalkit::token_f1(prediction, reference)
}

#[pyfunction]
fn rouge_l(prediction: &str, reference: &str) -> f64 {
    evalkit::rouge_l(prediction, reference)
}

#[pyfunction]
fn pair_loss(s_pos: f64, s_neg: f64) -> f64 {
    trainer::pair_loss(s_pos, s_neg)
}

/// 1-based indices from the last `My rank:` line.
#[pyfunction]
fn parse_rank_line(text: &str, k: usize) -> PyResult<Vec<usize>> {
    prompts::parse_rank_line(text, k).map_err(to_py)
}

#[pyclass(name = "Bm25Index")]
struct PyBm25(CoreBm25);

#[pymethods]
impl PyBm25 {
    #[new]
    fn new(items: Vec<(String, String)>) -> PyResult<Self> {
        Ok(PyBm25(CoreBm25::build(passages(items)?).map_err(to_py)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(passage id, score)` pairs, best first.
    #[pyo3(signature = (query, top = 10))]
    fn search(&self, query: &str, top: usize) -> Vec<(String, f64)> {
        self.0
            .search(query, top)
            .into_iter()
            .map(|(d, s)| (self.0.passage(d).id().to_string(), s))
            .collect()
    }
}

#[pyclass(name = "ToyEncoder")]
struct PyEncoder(CoreEncoder);

#[pymethods]
impl PyEncoder {
    #[new]
    #[pyo3(signature = (buckets = 65536, dim = 64, sigma = 0.02, seed = 0))]
    fn new(buckets: usize, dim: usize, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(PyEncoder(CoreEncoder::new(buckets, dim, sigma, seed).map_err(to_py)?))
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyEncoder(CoreEncoder::load(&path).map_err(to_py)?))
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(to_py)
    }

    #[getter]
    fn buckets(&self) -> usize {
        self.0.buckets()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        self.0.encode(text)
    }

    fn score(&self, query: &str, passage: &str) -> f64 {
        self.0.score(query, passage)
    }
}

/// Runs one stage (`synthesize`, `attribute`, `sample`, `train`, `eval`)
/// or `e2e` and returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (stage, config, overrides = Vec::new()))]
fn run_stage(py: Python<'_>, stage: &str, config: std::path::PathBuf, overrides: Vec<String>) -> PyResult<String> {
    let stage = match stage {
        "e2e" => None,
        other => Some(
            Stage::ALL
                .into_iter()
                .find(|s| s.name() == other)
                .ok_or_else(|| PyValueError::new_err(format!("unknown stage {other:?}")))?,
        ),
    };
    let summary = py
        .detach(|| {
            let cfg = RunConfig::load(&config, &overrides)?;
            match stage {
                Some(s) => core_run_stage(s, &cfg),
                None => cmd_e2e(&cfg),
            }
        })
        .map_err(to_py)?;
    serde_json::to_string(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn scarlet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(segment_document, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_1d, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_planted, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(token_f1, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(pair_loss, m)?)?;
    m.add_function(wrap_pyfunction!(parse_rank_line, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_class::<PyBm25>()?;
    m.add_class::<PyEncoder>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
