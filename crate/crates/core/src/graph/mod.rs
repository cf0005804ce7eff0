//! Unified sentence-pair graphs.
//!
//! Nodes `0..M` are premise tokens and `M..M+N` hypothesis tokens. Every
//! non-self edge is materialised in both directions; an edge carries a
//! message from `src` to `dst`.

mod build;
mod stopwords;

pub use build::{
    build_local_edges, build_pair_graph, derive_seed, interactive_cooccurrence,
    interactive_denoise, interactive_full, interactive_root, EVAL_EPOCH,
};
pub use stopwords::{default_stopwords, load_stopwords};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RelationVocab;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    LocalDep,
    LocalSeq,
    Interactive,
    #[serde(rename = "self")]
    SelfLoop,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::LocalDep => "local_dep",
            EdgeKind::LocalSeq => "local_seq",
            EdgeKind::Interactive => "interactive",
            EdgeKind::SelfLoop => "self",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Root,
    #[serde(alias = "cooccur")]
    Cooccurrence,
    Denoise,
    Full,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Root => "root",
            Strategy::Cooccurrence => "cooccurrence",
            Strategy::Denoise => "denoise",
            Strategy::Full => "full",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root" => Ok(Strategy::Root),
            "cooccur" | "cooccurrence" => Ok(Strategy::Cooccurrence),
            "denoise" => Ok(Strategy::Denoise),
            "full" => Ok(Strategy::Full),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// How interactive edges are created.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Keep probability of each candidate interactive edge (denoise only).
    pub alpha: f64,
    pub stopwords: BTreeSet<String>,
    /// Draw a fresh denoising sample every training epoch.
    pub resample_each_epoch: bool,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, alpha: f64) -> Result<Self> {
        let cfg = StrategyConfig {
            strategy,
            alpha,
            stopwords: default_stopwords(),
            resample_each_epoch: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// Whether graphs differ between epochs.
    pub fn is_stochastic(&self) -> bool {
        self.strategy == Strategy::Denoise && self.alpha < 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentencePairGraph {
    pub tokens: Vec<String>,
    pub edges: Vec<Edge>,
    pub premise_len: usize,
    pub hypothesis_len: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

impl SentencePairGraph {
    pub fn num_nodes(&self) -> usize {
        self.premise_len + self.hypothesis_len
    }

    pub fn is_premise(&self, node: usize) -> bool {
        node < self.premise_len
    }

    pub fn interactive_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Interactive)
    }

    /// Undirected interactive connections (each stored as two edges).
    pub fn interactive_connections(&self) -> usize {
        self.interactive_edges().count() / 2
    }

    pub fn sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.src).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.dst).collect()
    }

    pub fn relations(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.relation).collect()
    }

    /// Debug rendering with relation labels.
    pub fn dump(&self, relations: &RelationVocab) -> GraphDump {
        GraphDump {
            nodes: self.tokens.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDump {
                    src: e.src,
                    dst: e.dst,
                    rel: relations.label(e.relation).to_string(),
                    kind: e.kind,
                })
                .collect(),
            m: self.premise_len,
            n: self.hypothesis_len,
            strategy: self.strategy.to_string(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub src: usize,
    pub dst: usize,
    pub rel: String,
    pub kind: EdgeKind,
}

/// JSON shape of `build-graph` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDump>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub strategy: String,
    pub seed: u64,
}
