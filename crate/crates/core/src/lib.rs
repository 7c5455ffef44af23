//! Section recommendation for encyclopedia articles.
//!
//! Recommendations are sourced from articles that resemble the input article,
//! where resemblance comes from one of four signals:
//!
//! * text similarity through a latent topic model ([`topics`]),
//! * co-occurring sections through article-level matrix factorization ([`factorize`]),
//! * shared categories in a purity-pruned category network ([`catgraph`], [`counts`]),
//! * category-level matrix factorization over the count tables ([`factorize`]).
//!
//! Per-category rankings can be merged with a learned weighting over category
//! size and purity ([`l2r`]), and every method is scored by the offline
//! precision/recall harness in [`eval`].

pub mod catgraph;
pub mod corpus;
pub mod counts;
mod error;
pub mod eval;
pub mod factorize;
pub mod l2r;
pub mod persist;
pub mod pipeline;
pub mod ranking;
pub mod synth;
pub mod topics;

pub use crate::corpus::{Article, ArticleId, CategoryId, Corpus, SectionTitle};
pub use crate::error::{Error, Result};
pub use crate::ranking::{Ranking, RankingFlag};
