//! Phishing-email classification with hierarchical attentive BiLSTMs.
//!
//! The pipeline: [`corpus`] loads labeled emails, [`textprep`] splits them
//! into sentences and encodes them onto fixed-shape padded index grids,
//! [`model`] runs a two-level (word, sentence) BiLSTM-plus-attention network
//! over the body and an optional single-level network over the header, and
//! [`train`] fits the whole thing with Adam and hand-derived backprop.
//! [`supervision`] adds a squared-difference penalty pulling word attention
//! weights toward frequency-rank importance scores. [`baseline`] provides
//! tf-idf / embedding-mean features with a linear SVM for comparison, and
//! [`eval`] holds the metrics and cross-validation harness.
//!
//! All numerics are f64. Batch-level data parallelism (rayon) is enabled by
//! the `parallel` feature (on by default); results are reduced in a fixed
//! order so outputs are bit-identical regardless of thread count.

pub mod baseline;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod numcore;
pub(crate) mod par;
pub mod supervision;
pub mod textprep;
pub mod train;

pub use error::{Error, Result};
