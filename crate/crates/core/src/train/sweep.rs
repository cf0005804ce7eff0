use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{train_with_embeddings, EmbeddingInit, TrainConfig};
use crate::data::{LabelSet, LabeledPair};
use crate::error::Result;
use crate::graph::{Strategy, StrategyConfig};
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Best validation accuracy, or final training-set accuracy when no
    /// validation pairs are given.
    pub accuracy: f64,
    pub best_epoch: Option<usize>,
    pub final_train_loss: Option<f64>,
}

/// One denoise training run per α under identical seeds.
pub fn alpha_sweep(
    train_pairs: &[LabeledPair],
    val: Option<&[LabeledPair]>,
    alphas: &[f64],
    model_cfg: &ModelConfig,
    base: &StrategyConfig,
    cfg: &TrainConfig,
    labels: &LabelSet,
    embeddings: Option<&EmbeddingInit<'_>>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let strategy = StrategyConfig {
            strategy: Strategy::Denoise,
            alpha,
            ..base.clone()
        };
        strategy.validate()?;
        let mut run_cfg = cfg.clone();
        run_cfg.checkpoint_path = None;
        let trainer = train_with_embeddings(train_pairs, val, model_cfg, &strategy, &run_cfg, labels, embeddings)?;
        let accuracy = match trainer.metrics.best_val_acc {
            Some(a) => a,
            None => trainer.evaluate(train_pairs)?.accuracy,
        };
        log::info!("alpha {alpha}: accuracy {accuracy:.4}");
        rows.push(SweepRow {
            alpha,
            accuracy,
            best_epoch: trainer.metrics.best_epoch,
            final_train_loss: trainer.metrics.epochs.last().map(|e| e.train_loss),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,accuracy,best_epoch,final_train_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.alpha,
            r.accuracy,
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.final_train_loss.map(|l| l.to_string()).unwrap_or_default()
        );
    }
    out
}
