//! Social-aware, time-aware spatial keyword search.
//!
//! The crate is organized as a pipeline: [`model`] ingests objects,
//! check-ins, and friendships; [`tree`] packs objects into a spatial tree
//! whose nodes carry admissible score envelopes; [`social`] derives per-user
//! neighbor sets, graph embeddings, and check-in value blocks; [`scoring`]
//! evaluates the four ranking components exactly at objects and as upper
//! bounds at tree nodes; [`engine`] answers top-k queries best-first and by
//! exhaustive scan; [`index`] ties the stages together and [`persist`] stores
//! the result on disk.

pub mod bench;
pub mod engine;
pub mod error;
pub mod geo;
pub mod index;
pub mod model;
pub mod persist;
pub mod scoring;
pub mod social;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
