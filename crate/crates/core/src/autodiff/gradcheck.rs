use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Value};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Groups larger than this are checked on a seeded random subsample.
    pub max_entries: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            max_entries: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupError {
    pub name: String,
    pub checked: usize,
    pub max_abs_diff: f64,
    /// `max |a - n| / max(max |a|, max |n|, 1e-8)` over the checked entries.
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_err).fold(0.0, f64::max)
    }

    pub fn worst_group(&self) -> Option<&GroupError> {
        self.groups
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

fn evaluate<F>(params: &[Tensor], f: &F, with_grad: bool) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&mut Tape<'_>, &[Value]) -> Result<Value>,
{
    let mut tape = Tape::new();
    let bound: Vec<Value> = params.iter().map(|p| tape.param_ref(p)).collect();
    let loss = f(&mut tape, &bound)?;
    let value = tape.item(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {value}")));
    }
    let grads = if with_grad {
        tape.backward(loss)?;
        bound.iter().map(|&v| tape.grad_or_zeros(v)).collect()
    } else {
        Vec::new()
    };
    Ok((value, grads))
}

/// Compares the tape's analytic gradient of `f` with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, one report entry per parameter group.
///
/// `f` receives the tape and one bound leaf per element of `params`.
pub fn grad_check<F>(
    names: &[String],
    params: &mut [Tensor],
    cfg: &GradCheckConfig,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>, &[Value]) -> Result<Value>,
{
    assert_eq!(names.len(), params.len(), "one name per parameter group");
    let (_, analytic) = evaluate(params, &f, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut groups = Vec::with_capacity(params.len());

    for g in 0..params.len() {
        let n = params[g].numel();
        let entries: Vec<usize> = if n > cfg.max_entries {
            let mut idx = sample(&mut rng, n, cfg.max_entries).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };

        let (mut max_diff, mut max_a, mut max_n) = (0.0f64, 0.0f64, 0.0f64);
        for &i in &entries {
            let orig = params[g].data[i];
            params[g].data[i] = orig + cfg.epsilon;
            let plus = evaluate(params, &f, false).map(|r| r.0);
            params[g].data[i] = orig - cfg.epsilon;
            let minus = evaluate(params, &f, false).map(|r| r.0);
            params[g].data[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.epsilon);
            let a = analytic[g][i];
            max_diff = max_diff.max((a - numeric).abs());
            max_a = max_a.max(a.abs());
            max_n = max_n.max(numeric.abs());
        }
        groups.push(GroupError {
            name: names[g].clone(),
            checked: entries.len(),
            max_abs_diff: max_diff,
            rel_err: max_diff / max_a.max(max_n).max(1e-8),
        });
    }
    Ok(GradCheckReport { groups })
}
