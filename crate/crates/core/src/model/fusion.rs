use super::MatcherModel;
use crate::autodiff::{Tape, Tensor, Value};
use crate::error::Result;

/// Pooled sentence vector `[1 × d_n]` and its `[n]` node weights.
#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    pub vector: Value,
    pub weights: Value,
}

impl MatcherModel {
    /// `α = softmax(w · tanh(U W))`, `S = Σ_i α_i U_i`; mean pooling when
    /// fusion attention is ablated.
    fn pool<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        u: Value,
        w_proj: usize,
        w_score: usize,
    ) -> Result<Pooled> {
        let n = tape.shape(u)[0];
        let weights = if self.config.ablate_fusion_attention {
            tape.constant(Tensor::new(vec![n], vec![1.0 / n as f64; n]))
        } else {
            let proj = tape.matmul(u, bound[w_proj])?;
            let act = tape.tanh(proj);
            let scores = tape.matmul(act, bound[w_score])?;
            let flat = tape.reshape(scores, &[n])?;
            tape.segment_softmax(flat, &vec![0; n])?
        };
        let row = tape.reshape(weights, &[1, n])?;
        let vector = tape.matmul(row, u)?;
        Ok(Pooled { vector, weights })
    }

    /// Self-attentive pooling of both sentences' final node states.
    pub fn fuse<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        u_p: Value,
        u_q: Value,
    ) -> Result<(Pooled, Pooled)> {
        let l = &self.layout;
        let p = self.pool(tape, bound, u_p, l.w_p, l.w_1)?;
        let q = self.pool(tape, bound, u_q, l.w_q, l.w_2)?;
        Ok((p, q))
    }

    /// `[S_P; S_Q; S_P − S_Q; S_P ∘ S_Q]`, with `|S_P − S_Q|` in symmetric mode.
    pub fn matching_features<'a>(&self, tape: &mut Tape<'a>, s_p: Value, s_q: Value) -> Result<Value> {
        let mut diff = tape.sub(s_p, s_q)?;
        if self.config.symmetric {
            diff = tape.abs(diff);
        }
        let prod = tape.mul(s_p, s_q)?;
        tape.concat(&[s_p, s_q, diff, prod], 1)
    }

    /// Two-layer feed-forward classifier, `[1 × num_classes]` logits.
    pub fn classify<'a>(&self, tape: &mut Tape<'a>, bound: &[Value], s_p: Value, s_q: Value) -> Result<Value> {
        let l = &self.layout;
        let features = self.matching_features(tape, s_p, s_q)?;
        let h = tape.matmul(features, bound[l.cls_w1])?;
        let h = tape.add_bias(h, bound[l.cls_b1])?;
        let h = tape.relu(h);
        let out = tape.matmul(h, bound[l.cls_w2])?;
        tape.add_bias(out, bound[l.cls_b2])
    }
}
