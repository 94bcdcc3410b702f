//! Label aggregation, label encodings, co-occurrence penalized losses and
//! evaluation metrics for corpora annotated by several raters per item.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] and [`partition`]: annotation data model, CSV ingestion, vote
//!   counts and speaker-independent fold tables.
//! * [`aggregation`]: majority, plurality and all-inclusive consensus, donut
//!   sets, data and rating loss.
//! * [`encoding`]: hard, fraction, alpha-soft, multi-hot and smoothed targets.
//! * [`cooccurrence`]: co-occurrence counts, co-existing weights and the
//!   penalization matrix.
//! * [`losses`]: CE/BCE/KLD loss matrices, the penalized loss and gradients.
//! * [`trainer`]: a small feed-forward reference model and a per-rater ensemble.
//! * [`metrics`]: F1 family, UAR/UAP, KLD, multi-label metrics, significance.
//! * [`synth`]: synthetic corpora with known ground truth.
//! * [`cli`]: the `emolabel` command-line front end and run manifests.

pub mod aggregation;
pub mod cli;
pub mod cooccurrence;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod partition;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
