//! Finite-difference and dense-oracle checks for the autodiff primitives.

use matchgraph::autodiff::{grad_check, GradCheckConfig, Tape, Tensor, Value};
use matchgraph::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

/// Random entries bounded away from zero so kinked ops stay differentiable
/// inside the finite-difference window.
fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

type Build = dyn Fn(&mut Tape<'_>, &[Value]) -> Result<Value>;

/// Scalarises `op` as `sum(w ∘ op(inputs))` and compares the tape gradient
/// of every input with independently computed central differences.
fn fd_check(inputs: &[Tensor], weights: &Tensor, op: &Build) -> f64 {
    let eval = |inputs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vals: Vec<Value> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let y = op(&mut t, &vals).unwrap();
        t.data(y).iter().zip(&weights.data).map(|(a, b)| a * b).sum()
    };

    let mut t = Tape::new();
    let vals: Vec<Value> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let y = op(&mut t, &vals).unwrap();
    let w = t.constant(weights.clone());
    let wy = t.mul(y, w).unwrap();
    let loss = t.sum(wy);
    t.backward(loss).unwrap();

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, v) in vals.iter().enumerate() {
        let analytic = t.grad_or_zeros(*v);
        for i in 0..work[k].numel() {
            let orig = work[k].data[i];
            work[k].data[i] = orig + EPS;
            let plus = eval(&work);
            work[k].data[i] = orig - EPS;
            let minus = eval(&work);
            work[k].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * EPS);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    worst
}

fn run_instances(
    shapes: impl Fn(&mut ChaCha8Rng) -> (Vec<Vec<usize>>, Vec<usize>),
    op: &Build,
) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (in_shapes, out_shape) = shapes(&mut rng);
        let inputs: Vec<Tensor> = in_shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
        let weights = random_tensor(&mut rng, &out_shape);
        worst = worst.max(fd_check(&inputs, &weights, op));
    }
    worst
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let worst = run_instances(
        |rng| {
            let (m, k, n) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
            (vec![vec![m, k], vec![k, n]], vec![m, n])
        },
        &|t, v| t.matmul(v[0], v[1]),
    );
    assert!(worst < 1e-6, "matmul worst rel err {worst}");
}

#[test]
fn random_3x4_by_4x2_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let a = random_tensor(&mut rng, &[3, 4]);
    let b = random_tensor(&mut rng, &[4, 2]);
    let w = random_tensor(&mut rng, &[3, 2]);
    let worst = fd_check(&[a, b], &w, &|t, v| t.matmul(v[0], v[1]));
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn binary_elementwise_gradients() {
    let ops: Vec<(&str, Box<Build>)> = vec![
        ("add", Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul", Box::new(|t, v| t.mul(v[0], v[1]))),
    ];
    for (name, op) in &ops {
        let worst = run_instances(
            |rng| {
                let n = rng.gen_range(1..7);
                (vec![vec![n], vec![n]], vec![n])
            },
            op.as_ref(),
        );
        assert!(worst < 1e-6, "{name} worst rel err {worst}");
        let worst = run_instances(
            |rng| {
                let n = rng.gen_range(1..7);
                (vec![vec![1], vec![2, n]], vec![2, n])
            },
            op.as_ref(),
        );
        assert!(worst < 1e-6, "{name} scalar-broadcast worst rel err {worst}");
    }
}

#[test]
fn mul_of_two_vectors() {
    let a = Tensor::new(vec![2], vec![1.0, 2.0]);
    let b = Tensor::new(vec![2], vec![3.0, 4.0]);
    let w = Tensor::new(vec![2], vec![0.3, -0.7]);
    let worst = fd_check(&[a, b], &w, &|t, v| t.mul(v[0], v[1]));
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn unary_gradients() {
    let ops: Vec<(&str, Box<Build>)> = vec![
        ("tanh", Box::new(|t, v| Ok(t.tanh(v[0])))),
        ("sigmoid", Box::new(|t, v| Ok(t.sigmoid(v[0])))),
        ("relu", Box::new(|t, v| Ok(t.relu(v[0])))),
        ("leaky_relu", Box::new(|t, v| Ok(t.leaky_relu(v[0], 0.2)))),
        ("abs", Box::new(|t, v| Ok(t.abs(v[0])))),
        ("neg", Box::new(|t, v| Ok(t.neg(v[0])))),
        ("scale", Box::new(|t, v| Ok(t.scale(v[0], -1.7)))),
    ];
    for (name, op) in &ops {
        let worst = run_instances(
            |rng| {
                let (r, c) = (rng.gen_range(1..4), rng.gen_range(1..5));
                (vec![vec![r, c]], vec![r, c])
            },
            op.as_ref(),
        );
        assert!(worst < 1e-6, "{name} worst rel err {worst}");
    }
}

#[test]
fn structural_op_gradients() {
    let worst = run_instances(
        |rng| {
            let (r, c1, c2) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
            (vec![vec![r, c1], vec![r, c2]], vec![r, c1 + c2])
        },
        &|t, v| t.concat(v, 1),
    );
    assert!(worst < 1e-6, "concat axis 1: {worst}");

    let worst = run_instances(
        |rng| {
            let (r1, r2, c) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
            (vec![vec![r1, c], vec![r2, c]], vec![r1 + r2, c])
        },
        &|t, v| t.concat(v, 0),
    );
    assert!(worst < 1e-6, "concat axis 0: {worst}");

    let worst = run_instances(
        |_| (vec![vec![3, 5]], vec![3, 2]),
        &|t, v| t.slice_cols(v[0], 2, 2),
    );
    assert!(worst < 1e-6, "slice_cols: {worst}");

    let worst = run_instances(
        |_| (vec![vec![4, 3]], vec![5, 3]),
        &|t, v| t.gather_rows(v[0], &[3, 0, 3, 1, 3]),
    );
    assert!(worst < 1e-6, "gather_rows: {worst}");

    let worst = run_instances(
        |_| (vec![vec![3, 4], vec![4]], vec![3, 4]),
        &|t, v| t.add_bias(v[0], v[1]),
    );
    assert!(worst < 1e-6, "add_bias: {worst}");

    let worst = run_instances(
        |_| (vec![vec![3, 4], vec![3]], vec![3, 4]),
        &|t, v| t.row_scale(v[0], v[1]),
    );
    assert!(worst < 1e-6, "row_scale: {worst}");

    let worst = run_instances(
        |_| (vec![vec![2, 3]], vec![3, 2]),
        &|t, v| t.reshape(v[0], &[3, 2]),
    );
    assert!(worst < 1e-6, "reshape: {worst}");
}

#[test]
fn segment_op_gradients() {
    let worst = run_instances(
        |_| (vec![vec![6]], vec![6]),
        &|t, v| t.segment_softmax(v[0], &[0, 2, 0, 1, 2, 2]),
    );
    assert!(worst < 1e-6, "segment_softmax: {worst}");

    let worst = run_instances(
        |_| (vec![vec![5, 3]], vec![4, 3]),
        &|t, v| t.segment_sum(v[0], &[3, 0, 3, 1, 1], 4),
    );
    assert!(worst < 1e-6, "segment_sum: {worst}");
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_tensor(&mut rng, &[1, 3]);
        let label = rng.gen_range(0..3);
        let w = Tensor::scalar(1.0);
        let worst = fd_check(&[logits.clone()], &w, &move |t, v| t.cross_entropy(v[0], label));
        assert!(worst < 1e-8, "seed {seed}: {worst}");

        let mut t = Tape::new();
        let z = t.param(logits.clone());
        let l = t.cross_entropy(z, label).unwrap();
        t.backward(l).unwrap();
        let max = logits.data.iter().cloned().fold(f64::MIN, f64::max);
        let total: f64 = logits.data.iter().map(|v| (v - max).exp()).sum();
        for (j, g) in t.grad(z).unwrap().iter().enumerate() {
            let p = (logits.data[j] - max).exp() / total;
            let expect = p - if j == label { 1.0 } else { 0.0 };
            assert!((g - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn cross_entropy_shrinks_as_true_logit_grows() {
    let mut prev = f64::INFINITY;
    for margin in [0.0, 1.0, 5.0, 20.0, 80.0] {
        let mut t = Tape::new();
        let z = t.constant(Tensor::new(vec![3], vec![margin, 0.0, 0.0]));
        let loss = t.cross_entropy(z, 0).unwrap();
        let l = t.item(loss);
        assert!(l < prev && l >= 0.0);
        prev = l;
    }
    assert!(prev < 1e-30);
}

#[test]
fn sum_tanh_wx_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut w = random_tensor(&mut rng, &[3, 4]);
    w.data.iter_mut().for_each(|v| *v *= 0.1);
    let x = random_tensor(&mut rng, &[4, 1]);
    let mut params = vec![w];
    let report = grad_check(&["W".into()], &mut params, &GradCheckConfig::default(), |t, p| {
        let xv = t.constant(x.clone());
        let wx = t.matmul(p[0], xv)?;
        let y = t.tanh(wx);
        Ok(t.sum(y))
    })
    .unwrap();
    assert!(report.worst() < 1e-7, "{report:?}");
}

#[test]
fn backward_is_linear_in_the_loss() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_tensor(&mut rng, &[2, 3]);
        let w0 = random_tensor(&mut rng, &[3, 2]);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));

        let mut t = Tape::new();
        let x = t.param(x0);
        let w = t.param(w0);
        let h = t.matmul(x, w).unwrap();
        let th = t.tanh(h);
        let l1 = t.sum(th);
        let sq = t.mul(x, x).unwrap();
        let sg = t.sigmoid(sq);
        let l2 = t.sum(sg);
        let al1 = t.scale(l1, a);
        let bl2 = t.scale(l2, b);
        let combo = t.add(al1, bl2).unwrap();

        t.backward(l1).unwrap();
        let (g1x, g1w) = (t.grad_or_zeros(x), t.grad_or_zeros(w));
        t.zero_grad();
        t.backward(l2).unwrap();
        let (g2x, g2w) = (t.grad_or_zeros(x), t.grad_or_zeros(w));
        t.zero_grad();
        t.backward(combo).unwrap();
        let (gx, gw) = (t.grad_or_zeros(x), t.grad_or_zeros(w));
        for i in 0..gx.len() {
            assert!((gx[i] - (a * g1x[i] + b * g2x[i])).abs() < 1e-10);
        }
        for i in 0..gw.len() {
            assert!((gw[i] - (a * g1w[i] + b * g2w[i])).abs() < 1e-10);
        }
    }
}

/// Dense incidence-mask product `M·X`, with `M[v][e] = 1` iff edge `e`
/// belongs to segment `v`.
fn dense_segment_sum(x: &Tensor, segments: &[usize], count: usize) -> Vec<f64> {
    let (e_count, d) = x.dims();
    let mut mask = vec![0.0; count * e_count];
    for (e, &s) in segments.iter().enumerate() {
        mask[s * e_count + e] = 1.0;
    }
    let mut out = vec![0.0; count * d];
    for v in 0..count {
        for e in 0..e_count {
            for j in 0..d {
                out[v * d + j] += mask[v * e_count + e] * x.data[e * d + j];
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn segment_softmax_is_a_simplex_per_segment(
        scores in prop::collection::vec(-50.0f64..50.0, 1..40),
        seg_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seg_seed);
        let count = rng.gen_range(1..6);
        let segments: Vec<usize> = (0..scores.len()).map(|_| rng.gen_range(0..count)).collect();
        let mut t = Tape::new();
        let z = t.constant(Tensor::new(vec![scores.len()], scores.clone()));
        let y = t.segment_softmax(z, &segments).unwrap();
        let mut totals = vec![0.0; count];
        for (e, &s) in segments.iter().enumerate() {
            prop_assert!(t.data(y)[e] > 0.0);
            totals[s] += t.data(y)[e];
        }
        for (s, total) in totals.iter().enumerate() {
            if segments.contains(&s) {
                prop_assert!((total - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn segment_sum_equals_dense_mask_product(
        edges in 0usize..30,
        nodes in 1usize..8,
        dim in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let segments: Vec<usize> = (0..edges).map(|_| rng.gen_range(0..nodes)).collect();
        let x = Tensor::new(vec![edges, dim], (0..edges * dim).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let s = t.segment_sum(xv, &segments, nodes).unwrap();
        let dense = dense_segment_sum(&x, &segments, nodes);
        for (a, b) in t.data(s).iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
