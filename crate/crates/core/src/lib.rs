//! Identity-bias auditing for text-generation services.
//!
//! The pipeline renders randomized factorial travel-planning prompts,
//! collects responses, masks identity labels, vectorizes with TF-IDF, and
//! trains a linear probe to predict the traveler's group. Accuracy above
//! chance means the responses differ by group; one-vs-rest weights,
//! concordance search and hallucination rules show where.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod error;
pub mod generation;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod probe;
pub mod prompt_factory;
pub mod synth;

pub use error::{Error, Result};
pub use par::Exec;
