//! Gated graph attention layer.
//!
//! For an edge `j → i` and head `m`:
//!
//! ```text
//! z_ij  = LeakyReLU(a_m · [W_e h_i ; W_e h_j])
//! α_ij  = softmax of z over the edges entering i
//! g_ij  = ReLU(W_g [h_i ; h_j ; e_rel])          one gate per edge, all heads
//! h'_i  = ‖_m Σ_j g_ij ∘ tanh(α_ij W_c h_j)
//! ```
//!
//! Parallel edges are separate softmax entries with their own gates.

use super::params::GatLayer;
use super::MatcherModel;
use crate::autodiff::{Tape, Tensor, Value};
use crate::error::{Error, Result};
use crate::graph::SentencePairGraph;

/// Edge endpoints and relation ids in edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub rel: Vec<usize>,
    pub num_nodes: usize,
}

impl EdgeIndex {
    pub fn from_graph(g: &SentencePairGraph) -> Self {
        EdgeIndex {
            src: g.sources(),
            dst: g.targets(),
            rel: g.relations(),
            num_nodes: g.num_nodes(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Tape handles produced by one layer.
#[derive(Clone, Debug)]
pub struct LayerValues {
    pub output: Value,
    /// Per head, `[E]` attention weights.
    pub attention: Vec<Value>,
    /// `[E × head_dim]` gates.
    pub gates: Value,
}

impl MatcherModel {
    /// `[E]` attention logits `z` of one head.
    pub fn edge_scores<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        layer: usize,
        head: usize,
        h: Value,
        edges: &EdgeIndex,
    ) -> Result<Value> {
        let p = &self.layout.gat[layer].heads[head];
        let projected = tape.matmul(h, bound[p.w_e])?;
        let hi = tape.gather_rows(projected, &edges.dst)?;
        let hj = tape.gather_rows(projected, &edges.src)?;
        let pair = tape.concat(&[hi, hj], 1)?;
        let raw = tape.matmul(pair, bound[p.w_a])?;
        let z = tape.leaky_relu(raw, self.config.leaky_relu_slope);
        tape.reshape(z, &[edges.len()])
    }

    /// `[E × head_dim]` relational gates, or ones when gates are ablated.
    pub fn edge_gates<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        layer: usize,
        h: Value,
        edges: &EdgeIndex,
    ) -> Result<Value> {
        if self.config.ablate_gates {
            return Ok(tape.constant(Tensor::new(
                vec![edges.len(), self.config.head_dim],
                vec![1.0; edges.len() * self.config.head_dim],
            )));
        }
        let GatLayer { w_g, relations, .. } = &self.layout.gat[layer];
        let hi = tape.gather_rows(h, &edges.dst)?;
        let hj = tape.gather_rows(h, &edges.src)?;
        let er = tape.gather_rows(bound[*relations], &edges.rel)?;
        let input = tape.concat(&[hi, hj, er], 1)?;
        let pre = tape.matmul(input, bound[*w_g])?;
        Ok(tape.relu(pre))
    }

    /// One gated graph attention layer over node states `h` `[V × d_n]`.
    pub fn ggat_layer<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        layer: usize,
        h: Value,
        edges: &EdgeIndex,
    ) -> Result<LayerValues> {
        let v = edges.num_nodes;
        let mut has_incoming = vec![false; v];
        for &d in &edges.dst {
            has_incoming[d] = true;
        }
        if let Some(lonely) = has_incoming.iter().position(|x| !x) {
            return Err(Error::invalid(
                "ggat_layer",
                format!("node {lonely} has no incoming edge"),
            ));
        }

        let gates = self.edge_gates(tape, bound, layer, h, edges)?;
        let mut head_outputs = Vec::with_capacity(self.config.heads);
        let mut attention = Vec::with_capacity(self.config.heads);
        for m in 0..self.config.heads {
            let z = self.edge_scores(tape, bound, layer, m, h, edges)?;
            let alpha = tape.segment_softmax(z, &edges.dst)?;
            let w_c = bound[self.layout.gat[layer].heads[m].w_c];
            let content = tape.matmul(h, w_c)?;
            let cj = tape.gather_rows(content, &edges.src)?;
            let weighted = tape.row_scale(cj, alpha)?;
            let out = if self.config.tanh_after_aggregation {
                let msg = tape.mul(gates, weighted)?;
                let summed = tape.segment_sum(msg, &edges.dst, v)?;
                tape.tanh(summed)
            } else {
                let squashed = tape.tanh(weighted);
                let msg = tape.mul(gates, squashed)?;
                tape.segment_sum(msg, &edges.dst, v)?
            };
            head_outputs.push(out);
            attention.push(alpha);
        }
        let output = tape.concat(&head_outputs, 1)?;
        Ok(LayerValues {
            output,
            attention,
            gates,
        })
    }

    /// `z` for a single ordered pair of node states (receiver `h_i`,
    /// sender `h_j`).
    pub fn attention_score(&self, h_i: &[f64], h_j: &[f64], layer: usize, head: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let h = tape.constant(Tensor::from_rows(&[h_i, h_j]));
        let edges = EdgeIndex {
            src: vec![1],
            dst: vec![0],
            rel: vec![0],
            num_nodes: 2,
        };
        let z = self.edge_scores(&mut tape, &bound, layer, head, h, &edges)?;
        Ok(tape.item(z))
    }

    /// Gate vector for an edge of relation `rel` from sender `h_j` to
    /// receiver `h_i`.
    pub fn relational_gate(&self, h_i: &[f64], h_j: &[f64], rel: usize, layer: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let h = tape.constant(Tensor::from_rows(&[h_i, h_j]));
        let edges = EdgeIndex {
            src: vec![1],
            dst: vec![0],
            rel: vec![rel],
            num_nodes: 2,
        };
        let g = self.edge_gates(&mut tape, &bound, layer, h, &edges)?;
        Ok(tape.data(g).to_vec())
    }
}
