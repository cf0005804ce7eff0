mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use common::*;
use matchgraph::autodiff::{GradCheckConfig, Tensor};
use matchgraph::data::{build_relation_vocab, build_vocab, LabelSet, LabeledPair, Vocab};
use matchgraph::graph::{build_pair_graph, EdgeKind, Strategy, StrategyConfig, EVAL_EPOCH};
use matchgraph::inspect::{edge_importance, export_dot, node_importance, ImportanceReport};
use matchgraph::model::{read_checkpoint, write_checkpoint, EdgeIndex, MatcherModel, ModelConfig, PairInput};
use matchgraph::synth::{alignment_pairs, chain, random_pairs, template_pairs};
use matchgraph::train::{alpha_sweep, train, TrainConfig, Trainer};
use rand::Rng;

/// Prints one verdict line past the test harness capture, then asserts.
fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    let mark = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2} ({name}): {mark} {detail}").unwrap();
    out.flush().unwrap();
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn strategy(s: Strategy, alpha: f64) -> StrategyConfig {
    StrategyConfig::new(s, alpha).unwrap()
}

fn small_vocab() -> Vocab {
    Vocab::from_words((0..18).map(|i| format!("w{i}")).collect(), 1)
}

#[test]
fn c01_gradient_check() {
    let start = Instant::now();
    let pair = LabeledPair {
        pair_id: "g".into(),
        premise: chain(&["a", "dog", "runs", "fast"], "nsubj"),
        hypothesis: chain(&["the", "animal", "is", "moving", "quickly"], "obj"),
        label: 2,
    };
    let pairs = vec![pair.clone()];
    let vocab = build_vocab(&pairs, 1);
    let rels = build_relation_vocab(&pairs);
    let graph = build_pair_graph(&pair, &strategy(Strategy::Full, 0.0), &rels, 7, EVAL_EPOCH).unwrap();
    let mut model = MatcherModel::new(ModelConfig::tiny(3), vocab.len(), rels.len(), None, 7).unwrap();
    model.condition_for_grad_check(7);
    let report = model
        .grad_check(
            &PairInput::encode(&pair, &vocab),
            &EdgeIndex::from_graph(&graph),
            pair.label,
            &GradCheckConfig::default(),
        )
        .unwrap();
    let worst = report.worst();
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 1e-4 && secs < 60.0 && report.groups.len() == model.store.len();
    verdict(1, "full-model gradient check", ok, format!("worst rel err {worst:.2e} over {} groups in {secs:.1}s", report.groups.len()));
}

#[test]
fn c02_attention_and_fusion_are_simplices() {
    let pairs = random_pairs(100, 8, 3, 41);
    let rels = build_relation_vocab(&pairs);
    let model = scrambled_tiny(42, rels.len(), false);
    let vocab = small_vocab();
    let mut worst: f64 = 0.0;
    let mut negative = false;
    for p in &pairs {
        let g = build_pair_graph(p, &strategy(Strategy::Denoise, 0.5), &rels, 43, EVAL_EPOCH).unwrap();
        let t = model.predict(&PairInput::encode(p, &vocab), &EdgeIndex::from_graph(&g)).unwrap();
        for layer in &t.attention {
            for head in layer {
                let mut sums = vec![0.0; g.num_nodes()];
                for (e, &a) in g.edges.iter().zip(head) {
                    sums[e.dst] += a;
                    negative |= a < 0.0;
                }
                for s in sums {
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        for w in [&t.alpha_p, &t.alpha_q] {
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            negative |= w.iter().any(|&x| x < 0.0);
        }
    }
    verdict(2, "simplex", worst <= 1e-9 && !negative, format!("max |sum - 1| {worst:.1e} on 100 pairs, negative weights: {negative}"));
}

#[test]
fn c03_interactive_edge_counts() {
    let mut failures = Vec::new();
    let pairs = random_pairs(30, 9, 3, 44);
    let rels = build_relation_vocab(&pairs);
    for p in &pairs {
        let (m, n) = (p.premise.len(), p.hypothesis.len());
        let root = build_pair_graph(p, &strategy(Strategy::Root, 0.0), &rels, 0, 0).unwrap();
        let full = build_pair_graph(p, &strategy(Strategy::Full, 0.0), &rels, 0, 0).unwrap();
        if root.interactive_connections() != 1 || full.interactive_connections() != m * n {
            failures.push(format!("root/full counts on {}", p.pair_id));
        }
    }

    let words: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let ten = LabeledPair {
        pair_id: "ten".into(),
        premise: chain(&refs, "dep"),
        hypothesis: chain(&refs, "dep"),
        label: 0,
    };
    let ten_rels = build_relation_vocab(std::slice::from_ref(&ten));
    let mut means = Vec::new();
    for alpha in [0.3, 0.5, 0.8] {
        let cfg = strategy(Strategy::Denoise, alpha);
        let total: usize = (0..1000u64)
            .map(|seed| build_pair_graph(&ten, &cfg, &ten_rels, seed, 0).unwrap().interactive_connections())
            .sum();
        let mean = total as f64 / 1000.0;
        let band = 3.0 * (100.0 * alpha * (1.0 - alpha)).sqrt();
        if (mean - 100.0 * alpha).abs() > band {
            failures.push(format!("denoise alpha {alpha} mean {mean}"));
        }
        means.push(format!("{alpha}:{mean:.2}"));
    }

    let co_pairs = template_pairs(50, 45);
    let co_rels = build_relation_vocab(&co_pairs);
    let cfg = strategy(Strategy::Cooccurrence, 0.0);
    let stop = &cfg.stopwords;
    let mut matched = 0;
    for p in &co_pairs {
        let (a, b) = (&p.premise, &p.hypothesis);
        let mut brute = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let w = a.tokens[i].to_lowercase();
                if w == b.tokens[j].to_lowercase() && !stop.contains(&w) {
                    brute += 1;
                }
            }
        }
        matched += brute;
        let expected = brute.max(1);
        let got = build_pair_graph(p, &cfg, &co_rels, 0, 0).unwrap().interactive_connections();
        if got != expected {
            failures.push(format!("co-occurrence {} got {got} want {expected}", p.pair_id));
        }
    }
    verdict(
        3,
        "interactive edge counts",
        failures.is_empty(),
        format!("root=1, full=M*N on 30 pairs; denoise means {}; {matched} co-occurrence matches {failures:?}", means.join(" ")),
    );
}

#[test]
fn c04_sparse_layer_matches_dense_oracle() {
    let mut worst: f64 = 0.0;
    for ablate in [false, true] {
        let model = scrambled_tiny(46, 7, ablate);
        let mut r = rng(47);
        for _ in 0..100 {
            let v = r.gen_range(1..=10);
            let edges = random_graph(&mut r, v, 0.35, 7);
            let h = random_tensor(&mut r, &[v, 8], 1.5);
            for layer in 0..model.config.gat_layers {
                let d = max_abs_diff(&sparse_ggat(&model, layer, &h, &edges).data, &dense_ggat(&model, layer, &h, &edges).data);
                worst = worst.max(d);
            }
        }
    }
    verdict(4, "dense oracle", worst <= 1e-9, format!("max abs diff {worst:.1e} over 100 graphs, gates on and off"));
}

#[test]
fn c05_unit_gates_reduce_to_vanilla_attention() {
    let model = scrambled_tiny(48, 7, true);
    let mut r = rng(49);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = r.gen_range(1..=10);
        let edges = random_graph(&mut r, v, 0.4, 7);
        let h = random_tensor(&mut r, &[v, 8], 1.0);
        worst = worst.max(max_abs_diff(&sparse_ggat(&model, 0, &h, &edges).data, &vanilla_gat(&model, 0, &h, &edges).data));
    }
    verdict(5, "gate identity", worst <= 1e-12, format!("max abs diff to plain attention {worst:.1e}"));
}

#[test]
fn c06_overfits_small_set() {
    let start = Instant::now();
    let pairs = template_pairs(64, 1);
    let mut t = smoke_trainer(&pairs, strategy(Strategy::Denoise, 0.9), smoke_train(200));
    t.run(&pairs, Some(&pairs)).unwrap();
    let acc = t.metrics.best_val_acc.unwrap();
    let epoch = t.metrics.epochs.iter().find(|e| e.val_acc.unwrap() >= 0.98).map(|e| e.epoch);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        "overfit",
        acc >= 0.98 && secs < 300.0,
        format!("64 pairs, best accuracy {acc:.3}, first >= 0.98 at epoch {epoch:?}, {secs:.1}s"),
    );
}

#[test]
fn c07_determinism() {
    let pairs = template_pairs(24, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let run = || {
        let cfg = TrainConfig {
            checkpoint_path: Some(path.clone()),
            ..smoke_train(4)
        };
        let t = train(&pairs, Some(&pairs[..8]), &smoke_model(), &strategy(Strategy::Denoise, 0.5), &cfg, &LabelSet::binary()).unwrap();
        (t.metrics.losses(), std::fs::read(&path).unwrap())
    };
    let (la, ca) = run();
    let (lb, cb) = run();
    let drift = max_abs_diff(&la, &lb);
    verdict(7, "determinism", drift <= 1e-12 && ca == cb, format!("loss drift {drift:.1e}, checkpoints identical: {}", ca == cb));
}

#[test]
fn c08_checkpoint_round_trip() {
    let pairs = template_pairs(24, 7);
    let s = strategy(Strategy::Denoise, 0.8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");

    let half = train(&pairs, None, &smoke_model(), &s, &smoke_train(3), &LabelSet::binary()).unwrap();
    write_checkpoint(&path, &half.checkpoint().unwrap()).unwrap();
    let loaded = Trainer::from_checkpoint(&read_checkpoint(&path).unwrap(), None).unwrap();
    let (before, after) = (half.evaluate(&pairs).unwrap(), loaded.evaluate(&pairs).unwrap());
    let exact = before == after;

    let full = train(&pairs, None, &smoke_model(), &s, &smoke_train(6), &LabelSet::binary()).unwrap();
    let mut resumed = Trainer::from_checkpoint(&read_checkpoint(&path).unwrap(), Some(smoke_train(6))).unwrap();
    resumed.run(&pairs, None).unwrap();
    let tail = &full.step_losses[half.step_losses.len()..];
    let steps_match = tail.len() == resumed.step_losses.len();
    let mut worst = max_abs_diff(tail, &resumed.step_losses[..tail.len().min(resumed.step_losses.len())]);
    for (a, b) in full.model.store.tensors.iter().zip(&resumed.model.store.tensors) {
        worst = worst.max(max_abs_diff(&a.data, &b.data));
    }
    verdict(
        8,
        "checkpoint round trip",
        exact && steps_match && worst <= 1e-10,
        format!("evaluation identical: {exact}, resume drift {worst:.1e} over {} steps", tail.len()),
    );
}

#[test]
fn c09_symmetric_features_swap_invariant() {
    let mut model = scrambled_tiny(50, 7, false);
    model.config.symmetric = true;
    let d = model.config.fusion_dim;
    let mut r = rng(51);
    let mut ok = true;
    for _ in 0..100 {
        let a = random_tensor(&mut r, &[d], 2.0).data;
        let b = random_tensor(&mut r, &[d], 2.0).data;
        let feats = |x: &[f64], y: &[f64]| {
            let mut tape = matchgraph::autodiff::Tape::new();
            let xv = tape.constant(Tensor::new(vec![1, d], x.to_vec()));
            let yv = tape.constant(Tensor::new(vec![1, d], y.to_vec()));
            let f = model.matching_features(&mut tape, xv, yv).unwrap();
            tape.data(f).to_vec()
        };
        let (ab, ba) = (feats(&a, &b), feats(&b, &a));
        ok &= ab[2 * d..4 * d] == ba[2 * d..4 * d];
    }
    verdict(9, "symmetric features", ok, "|S_P-S_Q| and S_P*S_Q blocks bit-identical under swap on 100 draws".into());
}

#[test]
fn c10_alpha_sweep_shape() {
    let start = Instant::now();
    let pairs = alignment_pairs(2000, 6, 3, 12, 1);
    let (train_set, val_set) = pairs.split_at(1600);
    let model_cfg = ModelConfig {
        classifier_hidden: 64,
        relation_init: 1.0,
        ..smoke_model()
    };
    let cfg = smoke_train(10);
    let dim = model_cfg.embed_dim;
    let init = move |v: &Vocab| -> matchgraph::Result<Tensor> { Ok(random_tensor(&mut rng(99), &[v.len(), dim], 1.0)) };
    let rows = alpha_sweep(
        train_set,
        Some(val_set),
        &[0.0, 0.5, 1.0],
        &model_cfg,
        &strategy(Strategy::Denoise, 0.9),
        &cfg,
        &LabelSet::binary(),
        Some(&init),
    )
    .unwrap();
    let fallback = rows[0].accuracy;
    let best = rows[1..].iter().map(|r| r.accuracy).fold(0.0, f64::max);
    let table: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.alpha, r.accuracy)).collect();
    verdict(
        10,
        "alpha sweep shape",
        fallback < best,
        format!("2000 pairs, accuracy by alpha {} in {:.0}s", table.join(" "), start.elapsed().as_secs_f64()),
    );
}

#[test]
fn c11_interpretability_pipeline() {
    let pairs = random_pairs(50, 8, 3, 52);
    let rels = build_relation_vocab(&pairs);
    let model = scrambled_tiny(53, rels.len(), false);
    let vocab = small_vocab();
    let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let mut failures = BTreeSet::new();
    for p in &pairs {
        let g = build_pair_graph(p, &strategy(Strategy::Denoise, 0.6), &rels, 54, EVAL_EPOCH).unwrap();
        let t = model.predict(&PairInput::encode(p, &vocab), &EdgeIndex::from_graph(&g)).unwrap();
        let report = ImportanceReport::new(&p.pair_id, &t, &g, &rels, &labels).unwrap();
        if graphviz_rust::parse(&export_dot(&report, report.default_threshold())).is_err() {
            failures.insert("dot parse");
        }
        let w = node_importance(&t);
        let m = g.premise_len;
        if (w[..m].iter().sum::<f64>() - 1.0).abs() > 1e-9 || (w[m..].iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            failures.insert("node sums");
        }
        let edges = edge_importance(&t, &g).unwrap();
        for (e, &x) in g.edges.iter().zip(&edges) {
            let head = if e.src < m { t.alpha_p[e.src] } else { t.alpha_q[e.src - m] };
            let tail = if e.dst < m { t.alpha_p[e.dst] } else { t.alpha_q[e.dst - m] };
            if x != head + tail || (e.kind == EdgeKind::SelfLoop && x != 2.0 * head) {
                failures.insert("edge sums");
            }
        }
    }
    verdict(11, "interpretability pipeline", failures.is_empty(), format!("50 pairs, problems {failures:?}"));
}
