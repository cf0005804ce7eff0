#![allow(dead_code)]

use matchgraph::autodiff::Tensor;
use matchgraph::model::{EdgeIndex, MatcherModel, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// Random simple graph with a self loop on every node and each other
/// ordered pair present with probability `p`.
pub fn random_graph(rng: &mut impl Rng, nodes: usize, p: f64, relations: usize) -> EdgeIndex {
    let (mut src, mut dst, mut rel) = (vec![], vec![], vec![]);
    for i in 0..nodes {
        for j in 0..nodes {
            if i == j || rng.gen_bool(p) {
                src.push(j);
                dst.push(i);
                rel.push(rng.gen_range(0..relations));
            }
        }
    }
    EdgeIndex {
        src,
        dst,
        rel,
        num_nodes: nodes,
    }
}

fn row_times(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let (r, c) = m.dims();
    assert_eq!(r, x.len());
    (0..c).map(|k| (0..r).map(|i| x[i] * m.data[i * c + k]).sum()).collect()
}

/// Masked dense evaluation of one gated attention layer, written with
/// plain loops over a `V × V` adjacency matrix. Requires a simple graph.
pub fn dense_ggat(model: &MatcherModel, layer: usize, h: &Tensor, edges: &EdgeIndex) -> Tensor {
    let cfg: &ModelConfig = &model.config;
    let v = edges.num_nodes;
    let hd = cfg.head_dim;
    let mut mask = vec![vec![false; v]; v];
    let mut rel = vec![vec![0; v]; v];
    for e in 0..edges.len() {
        let (i, j) = (edges.dst[e], edges.src[e]);
        assert!(!mask[i][j], "dense oracle needs a simple graph");
        mask[i][j] = true;
        rel[i][j] = edges.rel[e];
    }
    let t = |id: usize| &model.store.tensors[id];
    let lp = &model.layout.gat[layer];
    let gate = |i: usize, j: usize| -> Vec<f64> {
        if cfg.ablate_gates {
            return vec![1.0; hd];
        }
        let r = t(lp.relations).row(rel[i][j]);
        let input: Vec<f64> = h.row(i).iter().chain(h.row(j)).chain(r).copied().collect();
        row_times(t(lp.w_g), &input).into_iter().map(|x| x.max(0.0)).collect()
    };
    let mut out = vec![0.0; v * cfg.heads * hd];
    for (m, head) in lp.heads.iter().enumerate() {
        let proj: Vec<Vec<f64>> = (0..v).map(|u| row_times(t(head.w_e), h.row(u))).collect();
        let content: Vec<Vec<f64>> = (0..v).map(|u| row_times(t(head.w_c), h.row(u))).collect();
        let a = &t(head.w_a).data;
        for i in 0..v {
            let mut z = vec![f64::NEG_INFINITY; v];
            for j in 0..v {
                if mask[i][j] {
                    let s: f64 = (0..hd).map(|k| a[k] * proj[i][k] + a[hd + k] * proj[j][k]).sum();
                    z[j] = if s > 0.0 { s } else { cfg.leaky_relu_slope * s };
                }
            }
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = z.iter().map(|&x| (x - max).exp()).sum();
            let mut acc = vec![0.0; hd];
            for j in 0..v {
                if !mask[i][j] {
                    continue;
                }
                let alpha = (z[j] - max).exp() / denom;
                let g = gate(i, j);
                for k in 0..hd {
                    acc[k] += if cfg.tanh_after_aggregation {
                        g[k] * alpha * content[j][k]
                    } else {
                        g[k] * (alpha * content[j][k]).tanh()
                    };
                }
            }
            for k in 0..hd {
                let x = if cfg.tanh_after_aggregation { acc[k].tanh() } else { acc[k] };
                out[i * cfg.heads * hd + m * hd + k] = x;
            }
        }
    }
    Tensor::new(vec![v, cfg.heads * hd], out)
}

/// Plain multi-head graph attention without any gate, on its own code
/// path: `h'_i = ‖_m Σ_j tanh(α_ij W_c h_j)`.
pub fn vanilla_gat(model: &MatcherModel, layer: usize, h: &Tensor, edges: &EdgeIndex) -> Tensor {
    let cfg = &model.config;
    let hd = cfg.head_dim;
    let v = edges.num_nodes;
    let t = |id: usize| &model.store.tensors[id];
    let mut out = vec![0.0; v * cfg.heads * hd];
    for (m, head) in model.layout.gat[layer].heads.iter().enumerate() {
        let proj: Vec<Vec<f64>> = (0..v).map(|u| row_times(t(head.w_e), h.row(u))).collect();
        let content: Vec<Vec<f64>> = (0..v).map(|u| row_times(t(head.w_c), h.row(u))).collect();
        let a = &t(head.w_a).data;
        let z: Vec<f64> = (0..edges.len())
            .map(|e| {
                let (i, j) = (edges.dst[e], edges.src[e]);
                let s: f64 = (0..hd).map(|k| a[k] * proj[i][k] + a[hd + k] * proj[j][k]).sum();
                if s > 0.0 {
                    s
                } else {
                    cfg.leaky_relu_slope * s
                }
            })
            .collect();
        for i in 0..v {
            let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges.dst[e] == i).collect();
            let max = incoming.iter().map(|&e| z[e]).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = incoming.iter().map(|&e| (z[e] - max).exp()).sum();
            for &e in &incoming {
                let alpha = (z[e] - max).exp() / denom;
                for k in 0..hd {
                    out[i * cfg.heads * hd + m * hd + k] += (alpha * content[edges.src[e]][k]).tanh();
                }
            }
        }
    }
    Tensor::new(vec![v, cfg.heads * hd], out)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs `ggat_layer` on constant node states.
pub fn sparse_ggat(model: &MatcherModel, layer: usize, h: &Tensor, edges: &EdgeIndex) -> Tensor {
    let mut tape = matchgraph::autodiff::Tape::new();
    let bound = model.store.bind(&mut tape);
    let hv = tape.constant(h.clone());
    let out = model.ggat_layer(&mut tape, &bound, layer, hv, edges).unwrap();
    tape.tensor(out.output)
}

/// Small model whose weights are re-drawn at a larger scale so that
/// attention and gates are far from uniform.
pub fn scrambled_tiny(seed: u64, relations: usize, ablate_gates: bool) -> MatcherModel {
    let mut cfg = ModelConfig::tiny(3);
    cfg.ablate_gates = ablate_gates;
    let mut model = MatcherModel::new(cfg, 20, relations, None, seed).unwrap();
    let mut r = rng(seed ^ 0xabcd);
    for t in &mut model.store.tensors {
        *t = random_tensor(&mut r, &t.shape.clone(), 0.8);
    }
    model
}

/// Model shape for the synthetic overfit runs: width 16 throughout,
/// 2 heads × 8.
pub fn smoke_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        lstm_hidden: 16,
        head_dim: 8,
        relation_dim: 8,
        fusion_dim: 16,
        classifier_hidden: 16,
        ..ModelConfig::tiny(2)
    }
}

pub fn smoke_train(epochs: usize) -> matchgraph::train::TrainConfig {
    matchgraph::train::TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        epochs,
        min_count: 1,
        seed: 0,
        ..Default::default()
    }
}

/// Trainer for the overfit runs. Word vectors stand in for pretrained
/// embeddings (uniform ±1) and relation tables are drawn at the same
/// scale.
pub fn smoke_trainer(
    pairs: &[matchgraph::data::LabeledPair],
    strategy: matchgraph::graph::StrategyConfig,
    cfg: matchgraph::train::TrainConfig,
) -> matchgraph::train::Trainer {
    let (vocab, relations) = matchgraph::train::build_resources(pairs, &[], cfg.min_count);
    let model_cfg = smoke_model();
    let mut r = rng(cfg.seed + 100);
    let embeddings = random_tensor(&mut r, &[vocab.len(), model_cfg.embed_dim], 1.0);
    let mut model = MatcherModel::new(model_cfg, vocab.len(), relations.len(), Some(embeddings), cfg.seed).unwrap();
    for id in model.layout.gat.iter().map(|l| l.relations).collect::<Vec<_>>() {
        let shape = model.store.tensors[id].shape.clone();
        model.store.tensors[id] = random_tensor(&mut r, &shape, 1.0);
    }
    let labels = vec!["0".to_string(), "1".to_string()];
    matchgraph::train::Trainer::new(model, vocab, relations, labels, strategy, cfg).unwrap()
}
