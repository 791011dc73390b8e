//! Black-box model contracts.
//!
//! A [`ScorerOracle`] scores a fixed ground truth under a given context
//! (teacher forcing) and returns one additive, higher-is-better value per
//! token: raw logits and log-probabilities both qualify. A
//! [`GeneratorOracle`] completes a prompt.
//!
//! Both traits require `Send + Sync` so one instance can serve every worker
//! thread. Implementations that need `&mut self` can be wrapped in
//! [`Serialized`].

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Result;
use crate::types::{GenerationTarget, Passage, QueryText};

pub mod http;
pub mod mock;

pub use http::{HttpGenerator, HttpOptions, HttpScorer, DEFAULT_TEMPERATURE, TOKEN_ENV};
pub use mock::{mock_linear_score, ContextLmScorer, LinearMockScorer, LinearMockSpec, MockGenerator, MockRules};

pub const DEFAULT_MAX_INFLIGHT: usize = 8;

pub trait ScorerOracle: Send + Sync {
    fn score_ground_truth(&self, context: &[Passage], query: &QueryText, target: &GenerationTarget)
        -> Result<Vec<f64>>;
}

pub trait GeneratorOracle: Send + Sync {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String>;
}

impl<T: ScorerOracle + ?Sized> ScorerOracle for &T {
    fn score_ground_truth(&self, c: &[Passage], q: &QueryText, t: &GenerationTarget) -> Result<Vec<f64>> {
        (**self).score_ground_truth(c, q, t)
    }
}

impl<T: GeneratorOracle + ?Sized> GeneratorOracle for &T {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String> {
        (**self).generate(prompt, temperature, max_tokens)
    }
}

impl<T: ScorerOracle + ?Sized> ScorerOracle for Box<T> {
    fn score_ground_truth(&self, c: &[Passage], q: &QueryText, t: &GenerationTarget) -> Result<Vec<f64>> {
        (**self).score_ground_truth(c, q, t)
    }
}

impl<T: GeneratorOracle + ?Sized> GeneratorOracle for Box<T> {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String> {
        (**self).generate(prompt, temperature, max_tokens)
    }
}

/// Scorer backends that are not thread-safe.
pub trait ScorerOracleMut: Send {
    fn score_ground_truth(
        &mut self,
        context: &[Passage],
        query: &QueryText,
        target: &GenerationTarget,
    ) -> Result<Vec<f64>>;
}

/// Generator backends that are not thread-safe.
pub trait GeneratorOracleMut: Send {
    fn generate(&mut self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String>;
}

/// Serializes calls into a `&mut self` backend behind a mutex.
pub struct Serialized<T>(Mutex<T>);

impl<T> Serialized<T> {
    pub fn new(inner: T) -> Self {
        Serialized(Mutex::new(inner))
    }

    pub fn into_inner(self) -> T {
        self.0.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl<T: ScorerOracleMut> ScorerOracle for Serialized<T> {
    fn score_ground_truth(&self, c: &[Passage], q: &QueryText, t: &GenerationTarget) -> Result<Vec<f64>> {
        let mut guard = self.0.lock().unwrap_or_else(|e| e.into_inner());
        guard.score_ground_truth(c, q, t)
    }
}

impl<T: GeneratorOracleMut> GeneratorOracle for Serialized<T> {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String> {
        let mut guard = self.0.lock().unwrap_or_else(|e| e.into_inner());
        guard.generate(prompt, temperature, max_tokens)
    }
}

/// Applies `f` to every item with at most `max_inflight` calls running at
/// once. Results come back in input order whatever the completion order.
pub fn bounded_map<T, R, F>(items: &[T], max_inflight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = max_inflight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
