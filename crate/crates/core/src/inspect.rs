//! Node and edge importance from a forward pass, and DOT rendering of
//! the weighted pair graph.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::RelationVocab;
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, SentencePairGraph};
use crate::model::ForwardTrace;

/// Fusion weights indexed by node: `α^P` over premise nodes followed by
/// `α^Q` over hypothesis nodes.
pub fn node_importance(trace: &ForwardTrace) -> Vec<f64> {
    trace.alpha_p.iter().chain(&trace.alpha_q).copied().collect()
}

/// `w(src) + w(dst)` for every edge of `graph`, in edge order.
pub fn edge_importance(trace: &ForwardTrace, graph: &SentencePairGraph) -> Result<Vec<f64>> {
    let w = node_importance(trace);
    if w.len() != graph.num_nodes() {
        return Err(Error::invalid(
            "edge_importance",
            format!("trace has {} nodes, graph {}", w.len(), graph.num_nodes()),
        ));
    }
    Ok(graph.edges.iter().map(|e| w[e.src] + w[e.dst]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub pair_id: String,
    pub tokens: Vec<String>,
    pub premise_len: usize,
    pub node_weights: Vec<f64>,
    pub edges: Vec<EdgeReport>,
    pub edge_weights: Vec<f64>,
    pub predicted: usize,
    pub predicted_label: String,
    pub logits: Vec<f64>,
}

impl ImportanceReport {
    pub fn new(
        pair_id: &str,
        trace: &ForwardTrace,
        graph: &SentencePairGraph,
        relations: &RelationVocab,
        labels: &[String],
    ) -> Result<Self> {
        let node_weights = node_importance(trace);
        let edge_weights = edge_importance(trace, graph)?;
        let predicted = trace.predicted();
        let predicted_label = labels
            .get(predicted)
            .cloned()
            .ok_or_else(|| Error::invalid("inspect", format!("no label name for class {predicted}")))?;
        let edges = graph
            .edges
            .iter()
            .zip(&edge_weights)
            .map(|(e, &weight)| EdgeReport {
                src: e.src,
                dst: e.dst,
                relation: relations.label(e.relation).to_string(),
                kind: e.kind,
                weight,
            })
            .collect();
        Ok(ImportanceReport {
            pair_id: pair_id.to_string(),
            tokens: graph.tokens.clone(),
            premise_len: graph.premise_len,
            node_weights,
            edges,
            edge_weights,
            predicted,
            predicted_label,
            logits: trace.logits.clone(),
        })
    }

    /// Half the mean edge weight.
    pub fn default_threshold(&self) -> f64 {
        if self.edge_weights.is_empty() {
            return 0.0;
        }
        0.5 * self.edge_weights.iter().sum::<f64>() / self.edge_weights.len() as f64
    }
}

/// Linear map of `xs` onto [0.1, 1.0]; constant inputs map to 1.0.
pub fn rescale(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter()
        .map(|&x| if hi > lo { 0.1 + 0.9 * (x - lo) / (hi - lo) } else { 1.0 })
        .collect()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Grey level for a darkness in [0, 1]; 1 is black.
fn grey(darkness: f64) -> String {
    let level = (255.0 * (1.0 - darkness)).round().clamp(0.0, 255.0) as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

/// Graphviz rendering: premise and hypothesis clusters, node fill darker
/// with weight, edge pen width growing with weight. Each two-way edge is
/// drawn once; interactive edges lighter than `threshold` are left out.
pub fn export_dot(report: &ImportanceReport, threshold: f64) -> String {
    let node_dark = rescale(&report.node_weights);
    let edge_width = rescale(&report.edge_weights);
    let m = report.premise_len;
    let mut out = String::from("digraph pair {\n  rankdir=LR;\n  node [shape=box, style=filled];\n");
    for (name, range) in [("premise", 0..m), ("hypothesis", m..report.tokens.len())] {
        let _ = writeln!(out, "  subgraph cluster_{name} {{\n    label={};", quote(name));
        for v in range {
            let d = node_dark[v];
            let font = if d > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                "    n{v} [label={}, fillcolor={}, fontcolor={font}, tooltip={}];",
                quote(&report.tokens[v]),
                quote(&grey(d)),
                quote(&format!("{:.4}", report.node_weights[v]))
            );
        }
        out.push_str("  }\n");
    }
    for (i, e) in report.edges.iter().enumerate() {
        if e.src > e.dst {
            continue;
        }
        if e.kind == EdgeKind::Interactive && e.weight < threshold {
            continue;
        }
        let style = match e.kind {
            EdgeKind::LocalDep => "solid",
            EdgeKind::LocalSeq => "dashed",
            EdgeKind::Interactive => "bold",
            EdgeKind::SelfLoop => "dotted",
        };
        let colour = if e.kind == EdgeKind::Interactive { "#1f5fbf" } else { "#404040" };
        let _ = writeln!(
            out,
            "  n{} -> n{} [dir=none, style={style}, color={}, penwidth={:.3}, label={}];",
            e.src,
            e.dst,
            quote(colour),
            4.0 * edge_width[i],
            quote(&e.relation)
        );
    }
    out.push_str("}\n");
    out
}
