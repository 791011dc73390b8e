//! Deterministic in-process oracles.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GeneratorOracle, ScorerOracle};
use crate::error::{Error, Result};
use crate::prompts;
use crate::synthesis::extract_entities;
use crate::text::{fnv1a64, normalize_token, tokens};
use crate::types::{GenerationTarget, Passage, QueryText};

/// A planted additive model over perturbation vectors, used as a reference
/// scorer for the surrogate fit. Interaction indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMockSpec {
    pub intercept: f64,
    pub main_effects: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl LinearMockSpec {
    pub fn noiseless(intercept: f64, main_effects: Vec<f64>) -> Self {
        LinearMockSpec {
            intercept,
            main_effects,
            interactions: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.main_effects.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        for &(i, j, _) in &self.interactions {
            if i == 0 || j == 0 || i > k || j > k || i == j {
                return Err(Error::InvalidConfig(format!(
                    "interaction ({i}, {j}) invalid for k = {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates the planted model at `v`. Noise is drawn from an RNG seeded by
/// `(spec.seed, v)`, so equal vectors always get equal values.
pub fn mock_linear_score(spec: &LinearMockSpec, v: &[u8]) -> Result<f64> {
    if v.len() != spec.k() {
        return Err(Error::DimensionMismatch {
            expected: spec.k(),
            actual: v.len(),
        });
    }
    let bit = |i: usize| f64::from(v[i]);
    let mut value = spec.intercept;
    for (i, w) in spec.main_effects.iter().enumerate() {
        value += w * bit(i);
    }
    for &(i, j, w) in &spec.interactions {
        value += w * bit(i - 1) * bit(j - 1);
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a64(v));
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        value += normal.sample(&mut rng);
    }
    Ok(value)
}

/// Exposes a [`LinearMockSpec`] as a scorer. Bit `i` of the perturbation
/// vector is set when `universe[i]` is among the context passage ids. The
/// value comes back as a single-token score.
#[derive(Debug, Clone)]
pub struct LinearMockScorer {
    spec: LinearMockSpec,
    universe: Vec<String>,
}

impl LinearMockScorer {
    pub fn new(spec: LinearMockSpec, universe: Vec<String>) -> Result<Self> {
        spec.validate()?;
        if universe.len() != spec.k() {
            return Err(Error::DimensionMismatch {
                expected: spec.k(),
                actual: universe.len(),
            });
        }
        Ok(LinearMockScorer { spec, universe })
    }

    pub fn spec(&self) -> &LinearMockSpec {
        &self.spec
    }
}

impl ScorerOracle for LinearMockScorer {
    fn score_ground_truth(&self, context: &[Passage], _: &QueryText, _: &GenerationTarget) -> Result<Vec<f64>> {
        let v: Vec<u8> = self
            .universe
            .iter()
            .map(|id| u8::from(context.iter().any(|p| p.id() == id)))
            .collect();
        Ok(vec![mock_linear_score(&self.spec, &v)?])
    }
}

/// Scores each ground-truth token by its smoothed log-probability under a
/// unigram model of the context text:
/// `ln((count(t) + smoothing) / (N + smoothing * vocab))`.
///
/// Passages that contain answer tokens raise the score; every extra passage
/// dilutes it slightly in proportion to its length.
#[derive(Debug, Clone)]
pub struct ContextLmScorer {
    pub smoothing: f64,
    pub vocab: f64,
}

impl Default for ContextLmScorer {
    fn default() -> Self {
        ContextLmScorer {
            smoothing: 0.01,
            vocab: 10_000.0,
        }
    }
}

impl ScorerOracle for ContextLmScorer {
    fn score_ground_truth(&self, context: &[Passage], _: &QueryText, target: &GenerationTarget) -> Result<Vec<f64>> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        let mut total = 0.0;
        for p in context {
            for t in tokens(p.text()) {
                *counts.entry(t).or_default() += 1.0;
                total += 1.0;
            }
        }
        let denom = total + self.smoothing * self.vocab;
        Ok(target
            .tokenized_truth
            .iter()
            .map(|raw| {
                let c = counts.get(&normalize_token(raw)).copied().unwrap_or(0.0);
                ((c + self.smoothing) / denom).ln()
            })
            .collect())
    }
}

/// Turns a passage containing `cue` into a question about the passage's
/// first entity; the answer is the word right after the cue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueRule {
    pub cue: String,
    /// Template with a `{subject}` placeholder.
    pub question: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRules {
    #[serde(default)]
    pub synthesis: Vec<CueRule>,
}

/// A scripted stand-in for the synthesizer / generator LLM.
///
/// It recognizes the four prompt templates in [`prompts`] and answers each
/// from the prompt content alone:
///
/// - synthesis: picks a passage matching a [`CueRule`] (seeded by a hash of
///   the prompt) and emits a question / answer pair about it;
/// - filtering: `[YES]` when every answer token occurs in the source passages;
/// - noise: the passage sharing most answer tokens, with those tokens removed;
/// - ranking: passages ordered by token overlap with the question.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    seed: u64,
    rules: MockRules,
}

fn section<'a>(prompt: &'a str, begin: &str, end: &str) -> Option<&'a str> {
    let start = prompt.find(begin)? + begin.len();
    let stop = prompt[start..].find(end)? + start;
    Some(&prompt[start..stop])
}

fn field<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    prompt.lines().rev().find_map(|l| l.strip_prefix(name)).map(str::trim)
}

impl MockGenerator {
    pub fn new(seed: u64, rules: MockRules) -> Self {
        MockGenerator { seed, rules }
    }

    fn pick(&self, prompt: &str, n: usize) -> usize {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(prompt.as_bytes());
        (fnv1a64(&bytes) % n as u64) as usize
    }

    fn synthesize(&self, prompt: &str) -> String {
        let passages = section(prompt, "====Context begins====", "====Context ends====")
            .map(prompts::parse_context_lines)
            .unwrap_or_default();
        let mut candidates = Vec::new();
        for text in &passages {
            let lower = text.to_ascii_lowercase();
            let Some(subject) = extract_entities(text).into_iter().next() else {
                continue;
            };
            for rule in &self.rules.synthesis {
                let cue = rule.cue.to_ascii_lowercase();
                let Some(pos) = lower.find(&cue) else { continue };
                let after = &text[pos + cue.len()..];
                let Some(answer) = after
                    .split_whitespace()
                    .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                    .find(|w| !w.is_empty())
                else {
                    continue;
                };
                let question = rule.question.replace("{subject}", &subject.surface);
                candidates.push((question, answer.to_string()));
            }
        }
        if candidates.is_empty() {
            // generic fallback: ask about the last entity of some passage
            for text in &passages {
                let ents = extract_entities(text);
                if ents.len() >= 2 {
                    let q = format!("Which name appears alongside {}?", ents[0].surface);
                    candidates.push((q, ents[ents.len() - 1].surface.clone()));
                }
            }
        }
        if candidates.is_empty() {
            return "I cannot produce data for this context.".to_string();
        }
        let (input, output) = &candidates[self.pick(prompt, candidates.len())];
        format!(
            "{}\nInput: {input}\nReference output: {output}\n{}",
            prompts::NEW_DATA_BEGIN,
            prompts::NEW_DATA_END
        )
    }

    fn check(&self, prompt: &str) -> String {
        let output = field(prompt, "Output:").unwrap_or("");
        let sources = prompt.find("Source passages:").map(|i| &prompt[i..]).unwrap_or("");
        let have: std::collections::HashSet<String> = tokens(sources).into_iter().collect();
        let want = tokens(output);
        if !want.is_empty() && want.iter().all(|t| have.contains(t)) {
            "The output is supported by the source passages. [YES]".to_string()
        } else {
            "[NO] The output is not supported by the source passages.".to_string()
        }
    }

    fn noise(&self, prompt: &str) -> String {
        let truth: Vec<String> = field(prompt, "Ground truth:").map(tokens).unwrap_or_default();
        let passages = section(prompt, "Context:\n", "\n\nPlease ensure")
            .map(prompts::parse_context_lines)
            .unwrap_or_default();
        let overlap = |text: &str| tokens(text).iter().filter(|t| truth.contains(t)).count();
        let Some(best) = passages
            .iter()
            .enumerate()
            .max_by_key(|(i, p)| (overlap(p), std::cmp::Reverse(*i)))
            .map(|(_, p)| p)
        else {
            return "No context given.".to_string();
        };
        let kept: Vec<&str> = best
            .split_whitespace()
            .filter(|w| !truth.contains(&normalize_token(w)))
            .collect();
        if kept.is_empty() {
            return "Nothing left to rewrite.".to_string();
        }
        format!(
            "{}\n{}\n{}",
            prompts::GENERATED_PASSAGE_BEGIN,
            kept.join(" "),
            prompts::GENERATED_PASSAGE_END
        )
    }

    fn rank(&self, prompt: &str) -> String {
        let question: Vec<String> = field(prompt, "Question:").map(tokens).unwrap_or_default();
        let passages = section(prompt, "Context:\n", "\n\nQuestion:")
            .map(prompts::parse_context_lines)
            .unwrap_or_default();
        let mut order: Vec<(usize, usize)> = passages
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let toks = tokens(p);
                (i + 1, question.iter().filter(|q| toks.contains(q)).count())
            })
            .collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let line = order
            .iter()
            .map(|(i, _)| format!("[{i}]"))
            .collect::<Vec<_>>()
            .join(">");
        format!("The answer follows from the top passage.\nMy rank: {line}")
    }
}

impl GeneratorOracle for MockGenerator {
    fn generate(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        Ok(if prompt.starts_with(prompts::SYNTHESIS_HEADER) {
            self.synthesize(prompt)
        } else if prompt.starts_with(prompts::FILTER_HEADER) {
            self.check(prompt)
        } else if prompt.starts_with(prompts::NOISE_HEADER) {
            self.noise(prompt)
        } else if prompt.starts_with(prompts::RANK_HEADER) {
            self.rank(prompt)
        } else {
            String::new()
        })
    }
}
