//! Toolkit for analyzing one person's longitudinal chat history.
//!
//! The pipeline ingests chat exports into a canonical corpus, annotates
//! conversation partners with seven relationship attributes, extracts
//! lexical, temporal, frequency, style, graph, and attribute features per
//! five-message context window, trains a BiLSTM-plus-feature-encoder
//! classifier per attribute, and evaluates it with leave-one-speaker-out
//! cross-validation at the context-window and speaker level.
//!
//! Modules follow the pipeline stages:
//!
//! - [`corpus`]: canonical message format, tokenization, context windows, stats
//! - [`annotation`]: the seven-attribute schema and its persistent store
//! - [`lexicon`]: category lexicons, dominance scores, linguistic style matching
//! - [`graph`]: mention graph, shortest paths, Louvain clustering
//! - [`embeddings`]: pre-trained word-vector tables and window encoding
//! - [`features`]: the six auxiliary feature families and normalization
//! - [`model`]: BiLSTM context encoder, feature encoders, attribute decoders
//! - [`eval`]: LOSO folds, window sampling, metrics, experiment grid
//! - [`report`]: dominance tables, temporal profiles, mirroring curves, clusters
//! - [`synth`]: synthetic corpora with planted, measurable signals
//!
//! Data-parallel inner loops (window featurization, per-source shortest
//! paths, fold execution) run on rayon when the default `parallel` feature
//! is enabled and fall back to sequential iteration otherwise; results are
//! identical either way.

pub mod annotation;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod graph;
pub mod lexicon;
pub mod model;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
