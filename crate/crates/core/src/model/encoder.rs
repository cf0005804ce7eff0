use super::params::{ContextParams, LstmDirection};
use super::MatcherModel;
use crate::autodiff::{Tape, Tensor, Value};
use crate::error::{Error, Result};

impl MatcherModel {
    /// Contextual node states `[n × d_n]` for one sentence of token ids.
    pub fn encode_sentence<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        ids: &[usize],
    ) -> Result<Value> {
        if ids.is_empty() {
            return Err(Error::invalid("encode_contextual", "empty sentence"));
        }
        let mut x = tape.gather_rows(bound[self.layout.embeddings], ids)?;
        match &self.layout.context {
            ContextParams::Projection { w, b } => {
                let proj = tape.matmul(x, bound[*w])?;
                tape.add_bias(proj, bound[*b])
            }
            ContextParams::BiLstm(layers) => {
                for [fwd, bwd] in layers {
                    let f = self.lstm_direction(tape, bound, fwd, x, false)?;
                    let b = self.lstm_direction(tape, bound, bwd, x, true)?;
                    x = tape.concat(&[f, b], 1)?;
                }
                Ok(x)
            }
        }
    }

    /// One LSTM pass over the rows of `x`, returning `[n × h]` states in
    /// original token order. Gate layout in the packed weights: i, f, g, o.
    fn lstm_direction<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        dir: &LstmDirection,
        x: Value,
        reverse: bool,
    ) -> Result<Value> {
        let n = tape.shape(x)[0];
        let h = self.config.lstm_hidden / 2;
        let w_ih = tape.matmul(x, bound[dir.w_ih])?;
        let proj = tape.add_bias(w_ih, bound[dir.bias])?;

        let mut hidden = tape.constant(Tensor::zeros(&[1, h]));
        let mut cell = tape.constant(Tensor::zeros(&[1, h]));
        let mut outputs = vec![hidden; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let row = tape.slice_rows(proj, t, 1)?;
            let rec = tape.matmul(hidden, bound[dir.w_hh])?;
            let gates = tape.add(row, rec)?;
            let i_pre = tape.slice_cols(gates, 0, h)?;
            let f_pre = tape.slice_cols(gates, h, h)?;
            let g_pre = tape.slice_cols(gates, 2 * h, h)?;
            let o_pre = tape.slice_cols(gates, 3 * h, h)?;
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let keep = tape.mul(f, cell)?;
            let write = tape.mul(i, g)?;
            cell = tape.add(keep, write)?;
            let squashed = tape.tanh(cell);
            hidden = tape.mul(o, squashed)?;
            outputs[t] = hidden;
        }
        tape.concat(&outputs, 0)
    }

    /// `(H_P, H_Q)`: each sentence encoded independently with the shared
    /// encoder parameters.
    pub fn encode_contextual<'a>(
        &self,
        tape: &mut Tape<'a>,
        bound: &[Value],
        premise: &[usize],
        hypothesis: &[usize],
    ) -> Result<(Value, Value)> {
        let hp = self.encode_sentence(tape, bound, premise)?;
        let hq = self.encode_sentence(tape, bound, hypothesis)?;
        Ok((hp, hq))
    }
}
