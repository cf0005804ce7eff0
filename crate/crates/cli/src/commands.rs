use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use matchgraph::autodiff::GradCheckConfig;
use matchgraph::data::{
    build_relation_vocab, load_embeddings, load_pairs, pairs_to_jsonl, parse_conllu_blocks, parse_embeddings,
    ConlluBlock, LabelSet, LabeledPair, Vocab,
};
use matchgraph::graph::{build_pair_graph, load_stopwords, Strategy, StrategyConfig, EVAL_EPOCH};
use matchgraph::inspect::{export_dot, ImportanceReport};
use matchgraph::model::{read_checkpoint, EdgeIndex, MatcherModel, ModelConfig, PairInput};
use matchgraph::synth::chain;
use matchgraph::train::{alpha_sweep, build_resources, sweep_csv, EmbeddingInit, TrainConfig, Trainer};

use crate::{
    Ablation, Command, EvalArgs, GradcheckArgs, GraphArgs, InspectArgs, ModelArgs, PrepArgs,
    StrategyArgs, SweepArgs, TrainArgs, TrainingArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prep(a) => prep(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::SweepAlpha(a) => sweep(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn label_set(spec: &str) -> Result<LabelSet> {
    Ok(match spec {
        "snli3" => LabelSet::snli3(),
        "binary" => LabelSet::binary(),
        path => LabelSet::from_file(Path::new(path))?,
    })
}

fn load(path: &Path, labels: &LabelSet) -> Result<Vec<LabeledPair>> {
    load_pairs(path, labels).with_context(|| format!("loading {}", path.display()))
}

fn strategy_config(a: &StrategyArgs) -> Result<StrategyConfig> {
    let strategy: Strategy = a.strategy.parse()?;
    let mut cfg = StrategyConfig::new(strategy, a.alpha)?;
    if let Some(path) = &a.stopwords {
        cfg.stopwords = load_stopwords(path)?;
    }
    Ok(cfg)
}

fn model_config(a: &ModelArgs, base: ModelConfig, num_classes: usize) -> Result<ModelConfig> {
    let mut cfg = match &a.config {
        Some(text) => {
            let json = if text.trim_start().starts_with('{') {
                text.clone()
            } else {
                std::fs::read_to_string(text).with_context(|| format!("reading {text}"))?
            };
            let overrides: serde_json::Value = serde_json::from_str(&json).context("parsing --config")?;
            base.with_overrides(&overrides)?
        }
        None => base,
    };
    cfg.num_classes = num_classes;
    cfg.symmetric |= a.symmetric;
    for ablation in &a.ablate {
        match ablation {
            Ablation::Contextual => cfg.ablate_contextual = true,
            Ablation::Gates => cfg.ablate_gates = true,
            Ablation::Fusion => cfg.ablate_fusion_attention = true,
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(a: &TrainingArgs, mut cfg: TrainConfig) -> TrainConfig {
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.min_count {
        cfg.min_count = v;
    }
    if a.clip_norm.is_some() {
        cfg.clip_norm = a.clip_norm;
    }
    cfg
}

/// Writes `text` to `path`, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn select<'p>(pairs: &'p [LabeledPair], id: Option<&str>) -> Result<&'p LabeledPair> {
    match id {
        Some(id) => pairs
            .iter()
            .find(|p| p.pair_id == id)
            .ok_or_else(|| anyhow!("no pair with id {id:?}")),
        None => pairs.first().ok_or_else(|| anyhow!("dataset is empty")),
    }
}

/// Consecutive blocks form a pair: premise then hypothesis. The pair id
/// comes from a `# pair_id = ..` comment (else `sent_id`), the label
/// from `# label = ..` on either block.
fn pairs_from_conllu(blocks: Vec<ConlluBlock>, labels: &LabelSet) -> Result<Vec<LabeledPair>> {
    if blocks.len() % 2 != 0 {
        bail!("{} sentence blocks; pairs need an even number", blocks.len());
    }
    let mut pairs = Vec::with_capacity(blocks.len() / 2);
    let mut it = blocks.into_iter();
    while let (Some(p), Some(q)) = (it.next(), it.next()) {
        let k = pairs.len();
        let pair_id = p
            .meta("pair_id")
            .or_else(|| p.meta("sent_id"))
            .map_or_else(|| format!("pair-{k}"), str::to_string);
        let label = p
            .meta("label")
            .or_else(|| q.meta("label"))
            .ok_or_else(|| anyhow!("pair {pair_id}: no label comment"))?;
        let label = labels
            .index(label)
            .ok_or_else(|| anyhow!("pair {pair_id}: unknown label {label:?}"))?;
        pairs.push(LabeledPair {
            pair_id,
            premise: p.sentence,
            hypothesis: q.sentence,
            label,
        });
    }
    Ok(pairs)
}

fn prep(a: PrepArgs) -> Result<()> {
    let labels = label_set(&a.data.labels)?;
    let path = &a.data.data;
    let is_conllu = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("conllu" | "conll" | "conllx")
    );
    let pairs = if is_conllu {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        pairs_from_conllu(parse_conllu_blocks(&text)?, &labels)?
    } else {
        load(path, &labels)?
    };
    let (vocab, relations) = build_resources(&pairs, &[], a.min_count);
    let mut counts = vec![0usize; labels.len()];
    for p in &pairs {
        counts[p.label] += 1;
    }
    let by_label: Vec<String> = labels.names.iter().zip(&counts).map(|(n, c)| format!("{n}={c}")).collect();
    eprintln!(
        "{} pairs ({}), {} words at min count {}, {} relations",
        pairs.len(),
        by_label.join(" "),
        vocab.len(),
        a.min_count,
        relations.len()
    );
    emit(a.out.as_deref(), &pairs_to_jsonl(&pairs, &labels))
}

fn build_graph(a: GraphArgs) -> Result<()> {
    let labels = label_set(&a.data.labels)?;
    let pairs = load(&a.data.data, &labels)?;
    let strategy = strategy_config(&a.strategy)?;
    let relations = build_relation_vocab(&pairs);
    let pair = select(&pairs, a.pair.as_deref())?;
    let graph = build_pair_graph(pair, &strategy, &relations, a.seed, a.epoch.unwrap_or(EVAL_EPOCH))?;
    let mut text = serde_json::to_string_pretty(&graph.dump(&relations))?;
    text.push('\n');
    emit(a.out.as_deref(), &text)
}

fn train(a: TrainArgs) -> Result<()> {
    let strategy = strategy_config(&a.strategy)?;
    let load_all = |labels: &LabelSet| -> Result<(Vec<LabeledPair>, Option<Vec<LabeledPair>>)> {
        let val = a.train.val.as_deref().map(|p| load(p, labels)).transpose()?;
        Ok((load(&a.data.data, labels)?, val))
    };
    let (mut trainer, train, val) = if a.resume {
        let ckpt = read_checkpoint(&a.checkpoint)?;
        let stored = Trainer::from_checkpoint(&ckpt, None)?;
        let mut cfg = train_config(&a.train, stored.config.clone());
        cfg.checkpoint_path = Some(a.checkpoint.clone());
        let (train, val) = load_all(&LabelSet::new(stored.labels)?)?;
        (Trainer::from_checkpoint(&ckpt, Some(cfg))?, train, val)
    } else {
        let labels = label_set(&a.data.labels)?;
        let cfg = TrainConfig {
            checkpoint_path: Some(a.checkpoint.clone()),
            ..train_config(&a.train, TrainConfig::default())
        };
        cfg.validate()?;
        let model_cfg = model_config(&a.model, ModelConfig::default(), labels.len())?;
        let (train, val) = load_all(&labels)?;
        let (vocab, relations) = build_resources(&train, val.as_deref().unwrap_or(&[]), cfg.min_count);
        let embeddings = match &a.train.embeddings {
            Some(path) => {
                let (table, coverage) = load_embeddings(path, &vocab, model_cfg.embed_dim, cfg.seed)?;
                log::info!("embeddings cover {} of {} words", coverage.hits, vocab.len());
                Some(table)
            }
            None => None,
        };
        let model = MatcherModel::new(model_cfg, vocab.len(), relations.len(), embeddings, cfg.seed)?;
        let trainer = Trainer::new(model, vocab, relations, labels.names, strategy, cfg)?;
        (trainer, train, val)
    };
    let metrics = trainer.run(&train, val.as_deref())?;
    if let (Some(epoch), Some(acc)) = (metrics.best_epoch, metrics.best_val_acc) {
        log::info!("best validation accuracy {acc:.4} at epoch {epoch}");
    }
    emit(a.out.as_deref(), &metrics.to_csv(!a.train.no_timing))
}

#[derive(Serialize)]
struct EvalSummary {
    pairs: usize,
    accuracy: f64,
    mean_loss: f64,
}

#[derive(Serialize)]
struct Prediction<'a> {
    pair_id: &'a str,
    label: &'a str,
    predicted: &'a str,
}

fn restore(checkpoint: &Path, threads: usize) -> Result<Trainer> {
    let ckpt = read_checkpoint(checkpoint)?;
    let stored = Trainer::from_checkpoint(&ckpt, None)?;
    let cfg = TrainConfig {
        threads,
        ..stored.config
    };
    Ok(Trainer::from_checkpoint(&ckpt, Some(cfg))?)
}

fn eval(a: EvalArgs) -> Result<()> {
    let trainer = restore(&a.checkpoint, a.threads)?;
    let labels = LabelSet::new(trainer.labels.clone())?;
    let pairs = load(&a.data, &labels)?;
    let ev = trainer.evaluate(&pairs)?;
    if let Some(out) = &a.out {
        let mut text = String::new();
        for (p, &pred) in pairs.iter().zip(&ev.predictions) {
            text.push_str(&serde_json::to_string(&Prediction {
                pair_id: &p.pair_id,
                label: &labels.names[p.label],
                predicted: &labels.names[pred],
            })?);
            text.push('\n');
        }
        emit(Some(out), &text)?;
    }
    let summary = EvalSummary {
        pairs: pairs.len(),
        accuracy: ev.accuracy,
        mean_loss: ev.mean_loss,
    };
    emit(None, &format!("{}\n", serde_json::to_string(&summary)?))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let labels = label_set(&a.data.labels)?;
    let base = strategy_config(&a.strategy)?;
    let cfg = train_config(&a.train, TrainConfig::default());
    cfg.validate()?;
    let model_cfg = model_config(&a.model, ModelConfig::default(), labels.len())?;
    let train = load(&a.data.data, &labels)?;
    let val = a.train.val.as_deref().map(|p| load(p, &labels)).transpose()?;
    let alphas = if a.alphas.is_empty() {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    } else {
        a.alphas.clone()
    };
    let vectors = a
        .train
        .embeddings
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let (dim, seed) = (model_cfg.embed_dim, cfg.seed);
    let init = |vocab: &Vocab| parse_embeddings(vectors.as_deref().unwrap_or(""), vocab, dim, seed).map(|(t, _)| t);
    let init_ref: Option<&EmbeddingInit<'_>> = if vectors.is_some() { Some(&init) } else { None };
    let rows = alpha_sweep(&train, val.as_deref(), &alphas, &model_cfg, &base, &cfg, &labels, init_ref)?;
    emit(a.out.as_deref(), &sweep_csv(&rows))
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let pair = LabeledPair {
        pair_id: "gradcheck".into(),
        premise: chain(&["a", "dog", "runs", "fast"], "nsubj"),
        hypothesis: chain(&["the", "animal", "is", "moving", "quickly"], "obj"),
        label: 2,
    };
    let pairs = std::slice::from_ref(&pair);
    let (vocab, relations) = build_resources(pairs, &[], 1);
    let cfg = model_config(&a.model, ModelConfig::tiny(3), 3)?;
    let strategy = StrategyConfig::new(a.strategy.parse()?, 0.5)?;
    let graph = build_pair_graph(&pair, &strategy, &relations, a.seed, EVAL_EPOCH)?;
    let mut model = MatcherModel::new(cfg, vocab.len(), relations.len(), None, a.seed)?;
    model.condition_for_grad_check(a.seed);
    let check = GradCheckConfig {
        epsilon: a.epsilon,
        seed: a.seed,
        ..GradCheckConfig::default()
    };
    let report = model.grad_check(
        &PairInput::encode(&pair, &vocab),
        &EdgeIndex::from_graph(&graph),
        pair.label,
        &check,
    )?;
    let mut out = String::new();
    for g in &report.groups {
        out.push_str(&format!("{:<28} {:>6} {:.3e}\n", g.name, g.checked, g.rel_err));
    }
    let worst = report.worst();
    let name = report.worst_group().map_or("-", |g| g.name.as_str());
    out.push_str(&format!("worst relative error {worst:.3e} ({name})\n"));
    emit(None, &out)?;
    if !(worst < 1e-4) {
        bail!("gradient check failed: worst relative error {worst:.3e} in {name}");
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let trainer = restore(&a.checkpoint, 1)?;
    let labels = LabelSet::new(trainer.labels.clone())?;
    let pairs = load(&a.data, &labels)?;
    let pair = select(&pairs, a.pair.as_deref())?;
    let graph = build_pair_graph(pair, &trainer.strategy, &trainer.relations, trainer.config.seed, EVAL_EPOCH)?;
    let trace = trainer
        .model
        .predict(&PairInput::encode(pair, &trainer.vocab), &EdgeIndex::from_graph(&graph))?;
    let report = ImportanceReport::new(&pair.pair_id, &trace, &graph, &trainer.relations, &trainer.labels)?;
    let threshold = a.threshold.unwrap_or_else(|| report.default_threshold());
    emit(Some(&a.out), &export_dot(&report, threshold))?;
    let json_path: PathBuf = a.out.with_extension("json");
    emit(Some(&json_path), &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    emit(None, &format!("{}\t{}\n", pair.pair_id, report.predicted_label))
}
