use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. Defaults are the full-size setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub lstm_layers: usize,
    /// Per-token Bi-LSTM output width (both directions together).
    pub lstm_hidden: usize,
    pub gat_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub relation_dim: usize,
    /// Width of the `tanh(U W)` projection in the self-attentive fusion.
    pub fusion_dim: usize,
    pub classifier_hidden: usize,
    pub num_classes: usize,
    /// Use `|S_P − S_Q|` instead of `S_P − S_Q` in the matching features.
    pub symmetric: bool,
    /// Replace the Bi-LSTM by a linear projection of the embeddings.
    pub ablate_contextual: bool,
    /// Force every relational gate to 1 (plain multi-head GAT).
    pub ablate_gates: bool,
    /// Mean-pool node states instead of self-attentive fusion.
    pub ablate_fusion_attention: bool,
    pub leaky_relu_slope: f64,
    /// Relation vectors start uniform in `±relation_init`.
    pub relation_init: f64,
    /// Apply `tanh` after summing messages instead of per message.
    pub tanh_after_aggregation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            lstm_layers: 3,
            lstm_hidden: 256,
            gat_layers: 2,
            heads: 4,
            head_dim: 64,
            relation_dim: 128,
            fusion_dim: 256,
            classifier_hidden: 256,
            num_classes: 3,
            symmetric: false,
            ablate_contextual: false,
            ablate_gates: false,
            ablate_fusion_attention: false,
            leaky_relu_slope: 0.2,
            relation_init: 0.05,
            tanh_after_aggregation: false,
        }
    }
}

impl ModelConfig {
    /// Scaled-down shape used for gradient checks and quick experiments:
    /// embed 8, lstm 8, 2 heads × 4, relation 4.
    pub fn tiny(num_classes: usize) -> Self {
        ModelConfig {
            embed_dim: 8,
            lstm_layers: 2,
            lstm_hidden: 8,
            gat_layers: 2,
            heads: 2,
            head_dim: 4,
            relation_dim: 4,
            fusion_dim: 8,
            classifier_hidden: 8,
            num_classes,
            ..ModelConfig::default()
        }
    }

    /// Node state width `d_n`.
    pub fn node_dim(&self) -> usize {
        self.lstm_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads * self.head_dim != self.lstm_hidden {
            return fail(format!(
                "heads·head_dim = {}·{} = {} must equal lstm_hidden = {}",
                self.heads,
                self.head_dim,
                self.heads * self.head_dim,
                self.lstm_hidden
            ));
        }
        if !self.ablate_contextual && (self.lstm_hidden % 2 != 0 || self.lstm_layers == 0) {
            return fail(format!(
                "a Bi-LSTM needs an even lstm_hidden and at least one layer (got {} and {})",
                self.lstm_hidden, self.lstm_layers
            ));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("relation_dim", self.relation_dim),
            ("fusion_dim", self.fusion_dim),
            ("classifier_hidden", self.classifier_hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes = {} (need at least 2)", self.num_classes));
        }
        if !(self.relation_init.is_finite() && self.relation_init > 0.0) {
            return fail(format!("relation_init = {}", self.relation_init));
        }
        if !(self.leaky_relu_slope.is_finite() && self.leaky_relu_slope >= 0.0) {
            return fail(format!("leaky_relu_slope = {}", self.leaky_relu_slope));
        }
        Ok(())
    }

    /// Applies a JSON object of overrides on top of `self`.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        let (Some(obj), Some(over)) = (base.as_object_mut(), overrides.as_object()) else {
            return Err(Error::Config("model config overrides must be a JSON object".into()));
        };
        for (k, v) in over {
            obj.insert(k.clone(), v.clone());
        }
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }
}
