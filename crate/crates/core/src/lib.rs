//! explicar: multilingual sentiment and hate-speech classification with
//! layer-frozen fine-tuning and from-scratch LIME word attributions.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`]: dataset loading, validation, stratified splits, histograms
//! - [`textclean`]: the deterministic cleaning pipeline
//! - [`backend`]: classifier probes, the native encoder, freeze plans
//! - [`trainer`]: fine-tuning with schedule derivation and checkpoints
//! - [`metrics`]: confusion matrices, macro scores, comparison tables
//! - [`limex`]: perturbation-based word attributions (LIME)

pub mod backend;
pub mod corpus;
pub mod error;
pub mod limex;
pub mod metrics;
pub mod segment;
pub mod textclean;
pub mod trainer;

pub use error::{Error, Result};
