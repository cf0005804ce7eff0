//! Sentence matching over unified sentence-pair graphs.
//!
//! A premise and a hypothesis, each with a dependency parse, become one
//! graph whose nodes are words. Local edges follow the parse and word
//! adjacency; interactive edges link the two sentences. Nodes are
//! initialised by a shared Bi-LSTM, updated by gated graph attention
//! layers, pooled per sentence with self-attention and classified from
//! heuristic matching features.

pub mod autodiff;
pub mod data;
pub mod graph;
pub mod inspect;
pub mod model;
pub mod synth;
pub mod train;
pub mod error;

pub use error::{Error, Result};
