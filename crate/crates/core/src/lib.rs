//! Temporal interaction prediction with long-term embeddings and a shared
//! delta-aware recurrent encoder.
//!
//! The pipeline: an [`eventlog::EventLog`] supplies per-entity histories,
//! [`model::Model`] turns a user history and an item history into a pair of
//! short-term embeddings, [`trainer`] fits the long-term embedding table and
//! encoder weights with plain shuffled mini-batches, and [`evaluator`] ranks
//! next items by replaying held-out events in time order.

pub mod error;
pub mod evaluator;
pub mod eventlog;
pub mod numerics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
