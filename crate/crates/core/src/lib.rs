//! Learn a static sampling distribution over training instances.
//!
//! The outer loop searches a 10-dimensional sampler family
//! `tau(x) = H(T(G(f(x))))` with Gaussian-process UCB; the inner loop scores
//! each candidate by fine-tuning a shared checkpoint under the candidate's
//! sampling probabilities and measuring validation accuracy.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bayesopt;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod search;

pub use bayesopt::{BoState, GpConfig, Observation};
pub use dataset::{BlobSpec, Dataset, SplitTag};
pub use error::{Error, Result};
pub use features::{extract_features, FeatureTable};
pub use metrics::RankReport;
pub use model::{Architecture, ModelWeights, TrainHyper};
pub use sampler::{AliasTable, SamplerParams, TransformMode, TransformTable};
pub use search::{Agent, Candidate, Evaluator, SearchConfig, SearchResult};
