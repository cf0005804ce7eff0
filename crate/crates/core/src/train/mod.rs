//! Cross-entropy training with Adam, evaluation and the α-sweep harness.
//!
//! Runs are deterministic given the seed: the shuffle of epoch `e` and the
//! denoising sample of every pair depend only on `(seed, e)`, and batch
//! gradients are always reduced in pair order, so the thread count does
//! not change the result.

mod adam;
mod sweep;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use sweep::{alpha_sweep, sweep_csv, SweepRow};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{build_vocab, LabelSet, LabeledPair, RelationVocab, Vocab};
use crate::error::{Error, Result};
use crate::graph::{build_pair_graph, derive_seed, StrategyConfig, EVAL_EPOCH};
use crate::model::{
    write_checkpoint, Checkpoint, CheckpointMeta, EdgeIndex, MatcherModel, ModelConfig, PairInput,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Validate every this many epochs (and always after the last one).
    pub eval_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Clip the batch gradient to this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Worker threads for per-pair forward/backward passes.
    pub threads: usize,
    /// Vocabulary frequency cutoff.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 64,
            epochs: 300,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            eval_every: 1,
            checkpoint_path: None,
            clip_norm: None,
            threads: 1,
            min_count: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.eval_every == 0 || self.threads == 0 || self.min_count == 0 {
            return Err(Error::Config("eval_every, threads and min_count must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    /// Wall time; not stored in checkpoints.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
}

impl RunMetrics {
    /// `epoch,train_loss,train_acc,val_acc,seconds`; with `timing` off the
    /// seconds column is written as 0 so the file is reproducible.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_acc,seconds\n");
        for e in &self.epochs {
            let val = e.val_acc.map(|v| v.to_string()).unwrap_or_default();
            let secs = if timing { e.seconds } else { 0.0 };
            let _ = writeln!(out, "{},{},{},{},{:.3}", e.epoch, e.train_loss, e.train_acc, val, secs);
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Word and relation vocabularies for a run: words counted on the
/// training pairs only, relations over training and validation pairs.
pub fn build_resources(train: &[LabeledPair], val: &[LabeledPair], min_count: usize) -> (Vocab, RelationVocab) {
    let vocab = build_vocab(train, min_count);
    let all: Vec<&LabeledPair> = train.iter().chain(val).collect();
    let relations = RelationVocab::new(
        all.iter()
            .flat_map(|p| p.premise.arcs().chain(p.hypothesis.arcs()))
            .map(|(_, _, rel)| rel),
    );
    (vocab, relations)
}

/// The seed-determined visiting order of `n` training pairs in `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle", epoch as u64)));
    order
}

fn graph_edges(
    pair: &LabeledPair,
    strategy: &StrategyConfig,
    relations: &RelationVocab,
    seed: u64,
    epoch: u64,
) -> Result<EdgeIndex> {
    build_pair_graph(pair, strategy, relations, seed, epoch).map(|g| EdgeIndex::from_graph(&g))
}

fn par_map<R, F>(pool: Option<&ThreadPool>, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

fn make_pool(threads: usize) -> Result<Option<Arc<ThreadPool>>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(|p| Some(Arc::new(p)))
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Token ids and, for epoch-independent strategies, cached graphs.
struct Prepared<'p> {
    pairs: &'p [LabeledPair],
    inputs: Vec<PairInput>,
    graphs: Option<Vec<EdgeIndex>>,
}

impl<'p> Prepared<'p> {
    fn new(
        pairs: &'p [LabeledPair],
        vocab: &Vocab,
        strategy: &StrategyConfig,
        relations: &RelationVocab,
        seed: u64,
        cache_epoch: Option<u64>,
    ) -> Result<Self> {
        let inputs = pairs.iter().map(|p| PairInput::encode(p, vocab)).collect();
        let graphs = match cache_epoch {
            Some(epoch) => Some(
                pairs
                    .iter()
                    .map(|p| graph_edges(p, strategy, relations, seed, epoch))
                    .collect::<Result<_>>()?,
            ),
            None => None,
        };
        Ok(Prepared { pairs, inputs, graphs })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub predictions: Vec<usize>,
}

fn evaluate_prepared(
    model: &MatcherModel,
    data: &Prepared<'_>,
    strategy: &StrategyConfig,
    relations: &RelationVocab,
    seed: u64,
    pool: Option<&ThreadPool>,
) -> Result<Evaluation> {
    let n = data.pairs.len();
    let results = par_map(pool, n, |i| -> Result<(usize, f64)> {
        let owned;
        let edges = match &data.graphs {
            Some(g) => &g[i],
            None => {
                owned = graph_edges(&data.pairs[i], strategy, relations, seed, EVAL_EPOCH)?;
                &owned
            }
        };
        let trace = model.predict(&data.inputs[i], edges)?;
        let label = data.pairs[i].label;
        let max = trace.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + trace.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        Ok((trace.predicted(), lse - trace.logits[label]))
    });
    let mut predictions = Vec::with_capacity(n);
    let (mut correct, mut loss) = (0usize, 0.0);
    for (r, pair) in results.into_iter().zip(data.pairs) {
        let (pred, l) = r?;
        correct += usize::from(pred == pair.label);
        loss += l;
        predictions.push(pred);
    }
    let denom = n.max(1) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / denom,
        mean_loss: loss / denom,
        predictions,
    })
}

/// Argmax accuracy of `model` on `pairs`. Denoised graphs use the
/// evaluation sample of each pair, so repeated calls agree.
pub fn evaluate(
    model: &MatcherModel,
    pairs: &[LabeledPair],
    vocab: &Vocab,
    relations: &RelationVocab,
    strategy: &StrategyConfig,
    seed: u64,
) -> Result<Evaluation> {
    let data = Prepared::new(pairs, vocab, strategy, relations, seed, None)?;
    evaluate_prepared(model, &data, strategy, relations, seed, None)
}

/// Model, optimiser state and bookkeeping of one training run.
#[derive(Debug)]
pub struct Trainer {
    pub model: MatcherModel,
    pub vocab: Vocab,
    pub relations: RelationVocab,
    pub labels: Vec<String>,
    pub strategy: StrategyConfig,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub metrics: RunMetrics,
    /// Mean batch loss of every step taken by this process.
    pub step_losses: Vec<f64>,
    pool: Option<Arc<ThreadPool>>,
}

#[derive(Serialize, Deserialize)]
struct TrainState {
    train_config: TrainConfig,
    strategy: StrategyConfig,
    epochs_done: usize,
    adam_t: u64,
    metrics: RunMetrics,
}

impl Trainer {
    pub fn new(
        model: MatcherModel,
        vocab: Vocab,
        relations: RelationVocab,
        labels: Vec<String>,
        strategy: StrategyConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        strategy.validate()?;
        if labels.len() != model.config.num_classes {
            return Err(Error::Config(format!(
                "{} labels but the model has {} classes",
                labels.len(),
                model.config.num_classes
            )));
        }
        if vocab.len() != model.vocab_size() || relations.len() != model.num_relations() {
            return Err(Error::Config(format!(
                "model built for {} words and {} relations, vocabularies have {} and {}",
                model.vocab_size(),
                model.num_relations(),
                vocab.len(),
                relations.len()
            )));
        }
        let adam = AdamState::new(&model.store.tensors);
        let pool = make_pool(config.threads)?;
        Ok(Trainer {
            model,
            vocab,
            relations,
            labels,
            strategy,
            config,
            adam,
            epochs_done: 0,
            metrics: RunMetrics::default(),
            step_losses: Vec::new(),
            pool,
        })
    }

    /// Graph epoch used for training epoch `epoch` (0-based), or `None`
    /// when graphs do not change between epochs.
    fn sample_epoch(&self, epoch: usize) -> Option<u64> {
        if self.strategy.is_stochastic() && self.strategy.resample_each_epoch {
            Some(epoch as u64)
        } else {
            None
        }
    }

    /// Trains until `config.epochs` epochs are done in total, validating
    /// on `val` and saving the best checkpoint when a path is configured.
    pub fn run(&mut self, train: &[LabeledPair], val: Option<&[LabeledPair]>) -> Result<RunMetrics> {
        let seed = self.config.seed;
        let static_graphs = if self.sample_epoch(0).is_none() { Some(0) } else { None };
        let train_data = Prepared::new(train, &self.vocab, &self.strategy, &self.relations, seed, static_graphs)?;
        let val_data = match val {
            Some(v) => Some(Prepared::new(
                v,
                &self.vocab,
                &self.strategy,
                &self.relations,
                seed,
                Some(EVAL_EPOCH),
            )?),
            None => None,
        };
        if self.epochs_done >= self.config.epochs && self.metrics.epochs.is_empty() {
            self.save_checkpoint()?;
        }
        while self.epochs_done < self.config.epochs {
            let m = self.run_epoch(&train_data, val_data.as_ref())?;
            log::info!(
                "epoch {} loss {:.6} train acc {:.4}{}",
                m.epoch,
                m.train_loss,
                m.train_acc,
                m.val_acc.map(|v| format!(" val acc {v:.4}")).unwrap_or_default()
            );
        }
        Ok(self.metrics.clone())
    }

    fn run_epoch(&mut self, data: &Prepared<'_>, val: Option<&Prepared<'_>>) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.epochs_done;
        let seed = self.config.seed;
        let n = data.pairs.len();
        let order = epoch_order(seed, epoch, n);
        let sample = self.sample_epoch(epoch);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let model = &self.model;
            let (strategy, relations) = (&self.strategy, &self.relations);
            let results = par_map(self.pool.as_deref(), batch.len(), |k| {
                let i = batch[k];
                let owned;
                let edges = match (&data.graphs, sample) {
                    (Some(g), _) => &g[i],
                    (None, s) => {
                        owned = graph_edges(&data.pairs[i], strategy, relations, seed, s.unwrap_or(0))?;
                        &owned
                    }
                };
                model.loss_and_grad(&data.inputs[i], edges, data.pairs[i].label)
            });

            let mut grads = self.model.store.zeros_like();
            let mut batch_loss = 0.0;
            for (r, &i) in results.into_iter().zip(batch) {
                let pg = r?;
                batch_loss += pg.loss;
                correct += usize::from(pg.predicted == data.pairs[i].label);
                for (acc, g) in grads.iter_mut().zip(pg.grads) {
                    if let Some(g) = g {
                        acc.iter_mut().zip(g).for_each(|(a, x)| *a += x);
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x *= scale);
            let mean = batch_loss * scale;
            if !mean.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {mean} at epoch {} batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            if let Some(c) = self.config.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            let store = &mut self.model.store;
            adam_step(&store.names, &mut store.tensors, &grads, &mut self.adam, &self.config.adam())?;
            self.step_losses.push(mean);
            loss_sum += batch_loss;
        }

        self.epochs_done += 1;
        let last = self.epochs_done == self.config.epochs;
        let val_acc = match val {
            Some(v) if last || self.epochs_done % self.config.eval_every == 0 => Some(
                evaluate_prepared(&self.model, v, &self.strategy, &self.relations, seed, self.pool.as_deref())?
                    .accuracy,
            ),
            _ => None,
        };
        let denom = n.max(1) as f64;
        let m = EpochMetrics {
            epoch: self.epochs_done,
            train_loss: loss_sum / denom,
            train_acc: correct as f64 / denom,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.metrics.epochs.push(m.clone());

        let improved = match (val.is_some(), val_acc, self.metrics.best_val_acc) {
            (false, _, _) => true,
            (true, Some(a), Some(best)) => a > best,
            (true, Some(_), None) => true,
            (true, None, _) => false,
        };
        if improved {
            self.metrics.best_epoch = Some(self.epochs_done);
            self.metrics.best_val_acc = val_acc;
            self.save_checkpoint()?;
        }
        Ok(m)
    }

    fn save_checkpoint(&self) -> Result<()> {
        match &self.config.checkpoint_path {
            Some(path) => write_checkpoint(path, &self.checkpoint()?),
            None => Ok(()),
        }
    }

    /// Full state: parameters, Adam moments and run bookkeeping.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let state = TrainState {
            train_config: self.config.clone(),
            strategy: self.strategy.clone(),
            epochs_done: self.epochs_done,
            adam_t: self.adam.t,
            metrics: self.metrics.clone(),
        };
        let mut arrays = self.model.named_arrays();
        for (key, moments) in [("m", &self.adam.m), ("v", &self.adam.v)] {
            for (name, (t, data)) in self.model.store.names.iter().zip(self.model.store.tensors.iter().zip(moments)) {
                arrays.push((format!("adam.{key}.{name}"), Tensor::new(t.shape.clone(), data.clone())));
            }
        }
        Ok(Checkpoint {
            meta: CheckpointMeta {
                config: self.model.config.clone(),
                vocab: self.vocab.clone(),
                relations: self.relations.clone(),
                labels: self.labels.clone(),
                state: serde_json::to_value(state)?,
            },
            arrays,
        })
    }

    /// Restores a run. `config`, when given, replaces the stored training
    /// configuration (for example to extend the epoch budget).
    pub fn from_checkpoint(ckpt: &Checkpoint, config: Option<TrainConfig>) -> Result<Self> {
        let state: TrainState = serde_json::from_value(ckpt.meta.state.clone())
            .map_err(|e| Error::Checkpoint(format!("no training state: {e}")))?;
        let model = MatcherModel::from_checkpoint(ckpt)?;
        let mut trainer = Trainer::new(
            model,
            ckpt.meta.vocab.clone(),
            ckpt.meta.relations.clone(),
            ckpt.meta.labels.clone(),
            state.strategy,
            config.unwrap_or(state.train_config),
        )?;
        let names = trainer.model.store.names.clone();
        for (i, name) in names.iter().enumerate() {
            let m = ckpt.array(&format!("adam.m.{name}"));
            let v = ckpt.array(&format!("adam.v.{name}"));
            match (m, v) {
                (Some(m), Some(v)) if m.numel() == trainer.adam.m[i].len() && v.numel() == trainer.adam.v[i].len() => {
                    trainer.adam.m[i] = m.data.clone();
                    trainer.adam.v[i] = v.data.clone();
                }
                _ => return Err(Error::Checkpoint(format!("missing optimiser state for {name}"))),
            }
        }
        trainer.adam.t = state.adam_t;
        trainer.epochs_done = state.epochs_done;
        trainer.metrics = state.metrics;
        Ok(trainer)
    }

    pub fn evaluate(&self, pairs: &[LabeledPair]) -> Result<Evaluation> {
        let data = Prepared::new(pairs, &self.vocab, &self.strategy, &self.relations, self.config.seed, None)?;
        evaluate_prepared(&self.model, &data, &self.strategy, &self.relations, self.config.seed, self.pool.as_deref())
    }
}

/// Produces the initial word-embedding table for a vocabulary.
pub type EmbeddingInit<'a> = dyn Fn(&Vocab) -> Result<Tensor> + Sync + 'a;

/// Builds vocabularies and a freshly initialised model, then trains.
/// `model_cfg.num_classes` is taken from `labels`.
pub fn train(
    train: &[LabeledPair],
    val: Option<&[LabeledPair]>,
    model_cfg: &ModelConfig,
    strategy: &StrategyConfig,
    cfg: &TrainConfig,
    labels: &LabelSet,
) -> Result<Trainer> {
    train_with_embeddings(train, val, model_cfg, strategy, cfg, labels, None)
}

/// [`train`] with word embeddings taken from `embeddings` instead of the
/// random initialisation.
pub fn train_with_embeddings(
    train: &[LabeledPair],
    val: Option<&[LabeledPair]>,
    model_cfg: &ModelConfig,
    strategy: &StrategyConfig,
    cfg: &TrainConfig,
    labels: &LabelSet,
    embeddings: Option<&EmbeddingInit<'_>>,
) -> Result<Trainer> {
    let (vocab, relations) = build_resources(train, val.unwrap_or(&[]), cfg.min_count);
    let mut model_cfg = model_cfg.clone();
    model_cfg.num_classes = labels.len();
    let table = embeddings.map(|f| f(&vocab)).transpose()?;
    let model = MatcherModel::new(model_cfg, vocab.len(), relations.len(), table, cfg.seed)?;
    let mut trainer = Trainer::new(model, vocab, relations, labels.names.clone(), strategy.clone(), cfg.clone())?;
    trainer.run(train, val)?;
    Ok(trainer)
}

/// Writes the per-epoch metrics CSV.
pub fn write_metrics(path: &Path, metrics: &RunMetrics, timing: bool) -> Result<()> {
    std::fs::write(path, metrics.to_csv(timing)).map_err(|e| Error::io(path, e))
}

