//! The matching network: embeddings → shared Bi-LSTM → gated graph
//! attention layers → self-attentive fusion → feed-forward classifier.
//!
//! Parameters are immutable during a forward pass; each pass records on
//! its own [`Tape`], so several passes may share one model concurrently.

mod checkpoint;
mod config;
mod encoder;
mod fusion;
mod ggat;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use config::ModelConfig;
pub use fusion::Pooled;
pub use ggat::{EdgeIndex, LayerValues};
pub use params::{init_params, ContextParams, GatHead, GatLayer, LstmDirection, ParamId, ParamLayout, ParamStore};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, GradCheckConfig, GradCheckReport, Tape, Tensor, Value};
use crate::data::{LabeledPair, Vocab};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub layout: ParamLayout,
}

/// Token ids of one pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairInput {
    pub premise: Vec<usize>,
    pub hypothesis: Vec<usize>,
}

impl PairInput {
    pub fn encode(pair: &LabeledPair, vocab: &Vocab) -> Self {
        PairInput {
            premise: vocab.encode(&pair.premise),
            hypothesis: vocab.encode(&pair.hypothesis),
        }
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardValues {
    pub h_p: Value,
    pub h_q: Value,
    pub layers: Vec<LayerValues>,
    pub premise: Pooled,
    pub hypothesis: Pooled,
    pub logits: Value,
}

/// Numeric record of a forward pass for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub h_p: Tensor,
    pub h_q: Tensor,
    /// `attention[layer][head][edge]`.
    pub attention: Vec<Vec<Vec<f64>>>,
    /// `gates[layer]`, `[E × head_dim]`.
    pub gates: Vec<Tensor>,
    pub alpha_p: Vec<f64>,
    pub alpha_q: Vec<f64>,
    pub s_p: Vec<f64>,
    pub s_q: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardValues {
    pub fn trace(&self, tape: &Tape<'_>) -> ForwardTrace {
        ForwardTrace {
            h_p: tape.tensor(self.h_p),
            h_q: tape.tensor(self.h_q),
            attention: self
                .layers
                .iter()
                .map(|l| l.attention.iter().map(|&a| tape.data(a).to_vec()).collect())
                .collect(),
            gates: self.layers.iter().map(|l| tape.tensor(l.gates)).collect(),
            alpha_p: tape.data(self.premise.weights).to_vec(),
            alpha_q: tape.data(self.hypothesis.weights).to_vec(),
            s_p: tape.data(self.premise.vector).to_vec(),
            s_q: tape.data(self.hypothesis.vector).to_vec(),
            logits: tape.data(self.logits).to_vec(),
        }
    }
}

impl ForwardTrace {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Loss, prediction and per-array gradients for one labelled pair.
#[derive(Clone, Debug)]
pub struct PairGradient {
    pub loss: f64,
    pub predicted: usize,
    /// `None` for arrays the pass did not reach.
    pub grads: Vec<Option<Vec<f64>>>,
}

impl MatcherModel {
    pub fn new(
        config: ModelConfig,
        vocab_size: usize,
        num_relations: usize,
        embeddings: Option<Tensor>,
        seed: u64,
    ) -> Result<Self> {
        let (store, layout) = init_params(&config, vocab_size, num_relations, embeddings, seed)?;
        Ok(MatcherModel {
            config,
            store,
            layout,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.store.tensors[self.layout.embeddings].shape[0]
    }

    pub fn num_relations(&self) -> usize {
        self.layout
            .gat
            .first()
            .map_or(0, |l| self.store.tensors[l.relations].shape[0])
    }

    /// Moves the parameters to a well-conditioned point for gradient
    /// checks: embedding and relation vectors re-drawn from
    /// uniform(-2, 2), weight matrices doubled. A fresh initialisation of
    /// a small model has activations so close to zero that several
    /// gradient groups sit below finite-difference resolution.
    pub fn condition_for_grad_check(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = vec![self.layout.embeddings];
        vectors.extend(self.layout.gat.iter().map(|l| l.relations));
        for (id, t) in self.store.tensors.iter_mut().enumerate() {
            if vectors.contains(&id) {
                t.data.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
            } else if t.shape.len() == 2 {
                t.data.iter_mut().for_each(|x| *x *= 2.0);
            }
        }
    }

    /// Records the full forward pass on `tape`.
    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        input: &PairInput,
        edges: &EdgeIndex,
    ) -> Result<ForwardValues> {
        let (m, n) = (input.premise.len(), input.hypothesis.len());
        if m + n != edges.num_nodes {
            return Err(Error::invalid(
                "forward",
                format!("graph has {} nodes for {m}+{n} tokens", edges.num_nodes),
            ));
        }
        let (h_p, h_q) = self.encode_contextual(tape, bound, &input.premise, &input.hypothesis)?;
        let mut h = tape.concat(&[h_p, h_q], 0)?;
        let mut layers = Vec::with_capacity(self.config.gat_layers);
        for k in 0..self.config.gat_layers {
            let layer = self.ggat_layer(tape, bound, k, h, edges)?;
            h = layer.output;
            layers.push(layer);
        }
        let u_p = tape.slice_rows(h, 0, m)?;
        let u_q = tape.slice_rows(h, m, n)?;
        let (premise, hypothesis) = self.fuse(tape, bound, u_p, u_q)?;
        let logits = self.classify(tape, bound, premise.vector, hypothesis.vector)?;
        Ok(ForwardValues {
            h_p,
            h_q,
            layers,
            premise,
            hypothesis,
            logits,
        })
    }

    /// Forward pass on a private tape.
    pub fn predict(&self, input: &PairInput, edges: &EdgeIndex) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, input, edges)?;
        Ok(out.trace(&tape))
    }

    /// Cross-entropy loss of one pair and its gradient for every array.
    pub fn loss_and_grad(&self, input: &PairInput, edges: &EdgeIndex, label: usize) -> Result<PairGradient> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, input, edges)?;
        let loss = tape.cross_entropy(out.logits, label)?;
        let value = tape.item(loss);
        let predicted = argmax(tape.data(out.logits));
        tape.backward(loss)?;
        let grads = bound
            .iter()
            .map(|&v| tape.grad(v).map(<[f64]>::to_vec))
            .collect();
        Ok(PairGradient {
            loss: value,
            predicted,
            grads,
        })
    }

    /// Finite-difference check of the cross-entropy gradient of one pair
    /// against every parameter array.
    pub fn grad_check(
        &self,
        input: &PairInput,
        edges: &EdgeIndex,
        label: usize,
        cfg: &GradCheckConfig,
    ) -> Result<GradCheckReport> {
        let mut params = self.store.tensors.clone();
        grad_check(&self.store.names, &mut params, cfg, |tape, bound| {
            let out = self.forward(tape, bound, input, edges)?;
            tape.cross_entropy(out.logits, label)
        })
    }
}
