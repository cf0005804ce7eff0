use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Value};
use crate::data::EMBED_INIT_RANGE;
use crate::error::{Error, Result};

/// Index of a named array in a [`ParamStore`].
pub type ParamId = usize;

/// Named trainable arrays in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    fn add(&mut self, name: String, tensor: Tensor) -> ParamId {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every array as a borrowed trainable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> Vec<Value> {
        self.tensors.iter().map(|t| tape.param_ref(t)).collect()
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.numel()]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatHead {
    pub w_e: ParamId,
    pub w_c: ParamId,
    pub w_a: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub w_g: ParamId,
    pub relations: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContextParams {
    /// Per layer, forward then backward direction.
    BiLstm(Vec<[LstmDirection; 2]>),
    Projection { w: ParamId, b: ParamId },
}

/// Where each role's array lives in the store.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub embeddings: ParamId,
    pub context: ContextParams,
    pub gat: Vec<GatLayer>,
    pub w_p: ParamId,
    pub w_1: ParamId,
    pub w_q: ParamId,
    pub w_2: ParamId,
    pub cls_w1: ParamId,
    pub cls_b1: ParamId,
    pub cls_w2: ParamId,
    pub cls_b2: ParamId,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn xavier(&mut self, rows: usize, cols: usize) -> Tensor {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(&[rows, cols], limit)
    }

    fn uniform(&mut self, shape: &[usize], limit: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect(),
        )
    }
}

/// Allocates and initialises every array for `cfg`.
///
/// Weight matrices are Xavier-uniform, embeddings uniform(-0.05, 0.05),
/// relation vectors uniform(-relation_init, relation_init), biases zero except the LSTM forget gate (1.0).
/// When `embeddings` is given it must be `[vocab_size × embed_dim]`.
pub fn init_params(
    cfg: &ModelConfig,
    vocab_size: usize,
    num_relations: usize,
    embeddings: Option<Tensor>,
    seed: u64,
) -> Result<(ParamStore, ParamLayout)> {
    cfg.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut store = ParamStore::default();
    let d = cfg.node_dim();

    let emb = match embeddings {
        Some(t) => {
            if t.shape != [vocab_size, cfg.embed_dim] {
                return Err(Error::Dimension {
                    op: "init_params embeddings",
                    left: t.shape.clone(),
                    right: vec![vocab_size, cfg.embed_dim],
                });
            }
            t
        }
        None => {
            let mut t = init.uniform(&[vocab_size, cfg.embed_dim], EMBED_INIT_RANGE);
            t.data[..cfg.embed_dim].fill(0.0);
            t
        }
    };
    let embeddings = store.add("embeddings".into(), emb);

    let context = if cfg.ablate_contextual {
        let w = store.add("context.proj.w".into(), init.xavier(cfg.embed_dim, d));
        let b = store.add("context.proj.b".into(), Tensor::zeros(&[d]));
        ContextParams::Projection { w, b }
    } else {
        let h = cfg.lstm_hidden / 2;
        let mut layers = Vec::with_capacity(cfg.lstm_layers);
        for l in 0..cfg.lstm_layers {
            let input = if l == 0 { cfg.embed_dim } else { cfg.lstm_hidden };
            let mut dir = |name: &str| {
                let w_ih = store.add(format!("lstm.{l}.{name}.w_ih"), init.xavier(input, 4 * h));
                let w_hh = store.add(format!("lstm.{l}.{name}.w_hh"), init.xavier(h, 4 * h));
                let mut b = Tensor::zeros(&[4 * h]);
                b.data[h..2 * h].fill(1.0);
                let bias = store.add(format!("lstm.{l}.{name}.bias"), b);
                LstmDirection { w_ih, w_hh, bias }
            };
            let fwd = dir("fwd");
            let bwd = dir("bwd");
            layers.push([fwd, bwd]);
        }
        ContextParams::BiLstm(layers)
    };

    let mut gat = Vec::with_capacity(cfg.gat_layers);
    for k in 0..cfg.gat_layers {
        let heads = (0..cfg.heads)
            .map(|m| GatHead {
                w_e: store.add(format!("gat.{k}.head{m}.w_e"), init.xavier(d, cfg.head_dim)),
                w_c: store.add(format!("gat.{k}.head{m}.w_c"), init.xavier(d, cfg.head_dim)),
                w_a: store.add(format!("gat.{k}.head{m}.w_a"), init.xavier(2 * cfg.head_dim, 1)),
            })
            .collect();
        let w_g = store.add(
            format!("gat.{k}.w_g"),
            init.xavier(2 * d + cfg.relation_dim, cfg.head_dim),
        );
        let relations = store.add(
            format!("gat.{k}.relations"),
            init.uniform(&[num_relations, cfg.relation_dim], cfg.relation_init),
        );
        gat.push(GatLayer { heads, w_g, relations });
    }

    let w_p = store.add("fusion.w_p".into(), init.xavier(d, cfg.fusion_dim));
    let w_1 = store.add("fusion.w_1".into(), init.xavier(cfg.fusion_dim, 1));
    let w_q = store.add("fusion.w_q".into(), init.xavier(d, cfg.fusion_dim));
    let w_2 = store.add("fusion.w_2".into(), init.xavier(cfg.fusion_dim, 1));

    let cls_w1 = store.add("classifier.w1".into(), init.xavier(4 * d, cfg.classifier_hidden));
    let cls_b1 = store.add("classifier.b1".into(), Tensor::zeros(&[cfg.classifier_hidden]));
    let cls_w2 = store.add(
        "classifier.w2".into(),
        init.xavier(cfg.classifier_hidden, cfg.num_classes),
    );
    let cls_b2 = store.add("classifier.b2".into(), Tensor::zeros(&[cfg.num_classes]));

    let layout = ParamLayout {
        embeddings,
        context,
        gat,
        w_p,
        w_1,
        w_q,
        w_2,
        cls_w1,
        cls_b1,
        cls_w2,
        cls_b2,
    };
    Ok((store, layout))
}
