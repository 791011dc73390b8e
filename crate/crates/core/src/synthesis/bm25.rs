//! Okapi BM25 over an in-memory passage collection.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::tokens;
use crate::types::Passage;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Immutable after [`Bm25Index::build`]; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    passages: Vec<Passage>,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (doc, term frequency), docs ascending
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build(passages: Vec<Passage>) -> Result<Self> {
        Bm25Index::with_params(passages, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params(passages: Vec<Passage>, k1: f64, b: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::InvalidConfig(format!("k1 = {k1} must be > 0")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidConfig(format!("b = {b} outside [0, 1]")));
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(passages.len());
        for (doc, p) in passages.iter().enumerate() {
            let toks = tokens(p.text());
            doc_len.push(toks.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((doc, n));
            }
        }
        let total: usize = doc_len.iter().sum();
        let avgdl = if passages.is_empty() {
            0.0
        } else {
            total as f64 / passages.len() as f64
        };
        Ok(Bm25Index {
            k1,
            b,
            passages,
            doc_len,
            avgdl,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passage(&self, doc: usize) -> &Passage {
        &self.passages[doc]
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, tf: f64, doc: usize) -> f64 {
        let norm = if self.avgdl > 0.0 {
            self.doc_len[doc] as f64 / self.avgdl
        } else {
            0.0
        };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
    }

    /// Score of document `doc` for already-normalized query terms. Repeated
    /// query terms count once per occurrence.
    pub fn score(&self, query_terms: &[String], doc: usize) -> f64 {
        query_terms
            .iter()
            .filter_map(|t| {
                let list = self.postings.get(t)?;
                let i = list.binary_search_by_key(&doc, |&(d, _)| d).ok()?;
                Some(self.idf(t) * self.term_weight(f64::from(list[i].1), doc))
            })
            .sum()
    }

    /// Documents with a positive score, best first; ties by passage id.
    pub fn search(&self, query: &str, top: usize) -> Vec<(usize, f64)> {
        let terms = tokens(query);
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(t);
            for &(doc, tf) in list {
                *acc.entry(doc).or_default() += idf * self.term_weight(f64::from(tf), doc);
            }
        }
        let mut hits: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.passages[a.0].id().cmp(self.passages[b.0].id()))
        });
        hits.truncate(top);
        hits
    }
}

/// Free-function form of [`Bm25Index::score`].
pub fn bm25_score(query_terms: &[String], doc: usize, index: &Bm25Index) -> f64 {
    index.score(query_terms, doc)
}
