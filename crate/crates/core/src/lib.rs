//! Unsupervised part-of-speech induction with first-order hidden Markov models.
//!
//! The library covers the full pipeline: corpus ingestion and preprocessing,
//! multinomial and maximum-entropy emission models, EM / direct-gradient /
//! variational-Bayes training, posterior-regularized training with an
//! l1/linf word-tag ambiguity penalty, clustering evaluation metrics, and a
//! semi-supervised averaged-perceptron consumer of the induced clusters.
//!
//! The `sparsepos` binary exposes the same functionality as subcommands; see
//! the crate README for the end-to-end protocol.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod hmm;
pub mod model_io;
pub mod optimize;
pub mod pr;
pub mod semisup;
pub mod synth;
pub mod train;

#[doc(hidden)]
pub mod oracles;

pub use error::{Error, Result};

/// Tool version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
