//! Training data and tooling for utility-based retrievers.
//!
//! The pipeline runs in stages that each read and write line-delimited JSON:
//!
//! 1. [`synthesis`] builds a shared context of passages around the entities
//!    of a seed instance and asks a generator to synthesize task data over it.
//! 2. [`attribution`] removes random subsets of the context, scores the
//!    ground truth under each subset and fits a ridge surrogate whose
//!    coefficients are the passage utilities.
//! 3. [`sampling`] splits the utilities into positive / discard / negative
//!    clusters with an exact 1-D 3-means.
//! 4. [`trainer`] fits a hashed bag-of-tokens dual encoder on the pairs.
//! 5. [`evalkit`] measures attribution and retrieval quality.
//!
//! External models sit behind the [`oracles`] traits; deterministic mocks
//! make every stage runnable offline.

pub mod attribution;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod jsonl;
pub mod oracles;
pub mod pipeline;
pub mod prompts;
pub mod sampling;
pub mod synthesis;
pub mod text;
pub mod trainer;
pub mod types;

#[cfg(test)]
pub(crate) mod test_http;

pub use error::{Error, Result};
pub use types::{
    make_query, segment_document, word_count, Corpus, FilterVerdict, GenerationTarget, Passage, PassageSource,
    QueryMode, QueryText, SharedContext, SyntheticExample, TaskSpec, TrainingPairSet,
};
