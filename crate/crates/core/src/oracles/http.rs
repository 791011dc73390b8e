//! Minimal JSON-over-HTTP oracle adapters.
//!
//! Scoring: `POST {"context": [..], "query": "..", "target": ".."}` answered
//! by `{"token_scores": [..]}`. Generation: `POST {"prompt", "temperature",
//! "max_tokens"}` answered by `{"text": ".."}`.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{GeneratorOracle, ScorerOracle};
use crate::error::{Error, Result};
use crate::types::{GenerationTarget, Passage, QueryText};

/// Bearer token for every oracle request, when set.
pub const TOKEN_ENV: &str = "SCARLET_ORACLE_TOKEN";

/// Synthesizer temperature used when the caller does not pick one.
pub const DEFAULT_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct HttpOptions {
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
    pub timeout: Duration,
    pub token: Option<String>,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
            token: None,
        }
    }
}

impl HttpOptions {
    /// Defaults plus the bearer token from [`TOKEN_ENV`].
    pub fn from_env() -> Self {
        HttpOptions {
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            ..HttpOptions::default()
        }
    }
}

/// Blocking JSON client with retry on transport errors, 429 and 5xx.
#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    opts: HttpOptions,
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(Error),
}

impl JsonClient {
    pub(crate) fn new(opts: HttpOptions) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(opts.timeout))
            .build()
            .into();
        JsonClient { agent, opts }
    }

    fn classify(result: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Attempt {
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(Error::OracleUnavailable(format!("HTTP {status}")));
        }
        match resp.body_mut().read_to_string() {
            Ok(body) => match serde_json::from_str(&body) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(Error::ProtocolError(format!("invalid JSON body: {e}"))),
            },
            Err(e) => Attempt::Retry(e.to_string()),
        }
    }

    fn with_retry(&self, url: &str, mut send: impl FnMut() -> Attempt) -> Result<Value> {
        let mut delay = self.opts.backoff;
        let mut last = String::new();
        for attempt in 0..self.opts.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match send() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(reason) => {
                    log::warn!("{url}: attempt {} failed: {reason}", attempt + 1);
                    last = reason;
                }
            }
        }
        Err(Error::OracleUnavailable(format!(
            "{url}: {} attempts failed, last: {last}",
            self.opts.attempts
        )))
    }

    pub(crate) fn post_json<B: Serialize>(&self, url: &str, body: &B) -> Result<Value> {
        self.with_retry(url, || {
            let mut req = self.agent.post(url).header("Accept", "application/json");
            if let Some(t) = &self.opts.token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            Self::classify(req.send_json(body))
        })
    }

    pub(crate) fn get_json(&self, url: &str, query: &[(&str, &str)]) -> Result<Value> {
        self.with_retry(url, || {
            let mut req = self
                .agent
                .get(url)
                .header("Accept", "application/sparql-results+json, application/json");
            for (k, v) in query {
                req = req.query(*k, *v);
            }
            Self::classify(req.call())
        })
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    context: Vec<&'a str>,
    query: &'a str,
    target: &'a str,
}

#[derive(Debug, Clone)]
pub struct HttpScorer {
    url: String,
    client: JsonClient,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>, opts: HttpOptions) -> Self {
        HttpScorer {
            url: url.into(),
            client: JsonClient::new(opts),
        }
    }

    pub fn http_score(&self, context: &[Passage], query: &QueryText, target: &GenerationTarget) -> Result<Vec<f64>> {
        let body = ScoreRequest {
            context: context.iter().map(Passage::text).collect(),
            query: &query.rendered,
            target: &target.ground_truth,
        };
        let resp = self.client.post_json(&self.url, &body)?;
        let scores = resp
            .get("token_scores")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::ProtocolError("response lacks a token_scores array".into()))?;
        let scores = scores
            .iter()
            .map(|v| v.as_f64().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::ProtocolError("token_scores holds a non-finite or non-numeric value".into()))?;
        if scores.is_empty() {
            return Err(Error::ProtocolError("token_scores is empty".into()));
        }
        Ok(scores)
    }
}

impl ScorerOracle for HttpScorer {
    fn score_ground_truth(&self, c: &[Passage], q: &QueryText, t: &GenerationTarget) -> Result<Vec<f64>> {
        self.http_score(c, q, t)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, opts: HttpOptions) -> Self {
        HttpGenerator {
            url: url.into(),
            client: JsonClient::new(opts),
        }
    }

    /// `temperature` falls back to [`DEFAULT_TEMPERATURE`].
    pub fn http_generate(&self, prompt: &str, temperature: Option<f64>, max_tokens: u32) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        if max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be positive".into()));
        }
        let temperature = temperature.unwrap_or(DEFAULT_TEMPERATURE);
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidInput(format!("temperature {temperature} < 0")));
        }
        let body = GenerateRequest {
            prompt,
            temperature,
            max_tokens,
        };
        let resp = self.client.post_json(&self.url, &body)?;
        resp.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::ProtocolError("response lacks a text string".into()))
    }
}

impl GeneratorOracle for HttpGenerator {
    fn generate(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String> {
        self.http_generate(prompt, Some(temperature), max_tokens)
    }
}
