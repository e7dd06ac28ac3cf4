//! Diachronic word embeddings for month-sliced child-language corpora.
//!
//! A compass model (skip-gram with negative sampling) is trained on the whole
//! corpus; its output layer is then frozen and each monthly slice fine-tunes
//! its own input layer, so all slices share one coordinate system. The
//! analysis modules measure how those representations develop over time.

pub mod categorize;
pub mod change;
pub mod compass;
pub mod corpus;
pub mod error;
pub mod pipeline;
pub mod probes;
pub mod rsa;
pub mod synth;
pub mod trainer;
pub mod viz;
pub mod warning;

pub use error::{Error, Result};
