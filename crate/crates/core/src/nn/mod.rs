//! Minimal dense/conv neural-network core: parameter algebra, forward and
//! backward passes, losses, optimizers.

mod model;
mod optim;
mod params;

pub use model::{LayerSpec, ModelKind, ModelSpec};
pub use optim::{optimizer_step, Direction, OptimKind, OptimizerState};
pub use params::{l2_distance, ParamVector};

use crate::error::{Error, Result};

/// A labelled minibatch. Inputs are row-major `(n, dim)` with samples stored
/// as flattened `[channel][row][col]` images.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if labels.is_empty() || inputs.len() != labels.len() * dim {
            return Err(Error::Config(format!(
                "batch shape mismatch: {} inputs, {} labels, dim {}",
                inputs.len(),
                labels.len(),
                dim
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Row-major `(n, num_classes)` network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Logits {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Loss selector for [`loss_and_grad`].
#[derive(Debug, Clone)]
pub enum Loss {
    /// Mean softmax cross-entropy against the batch labels.
    CrossEntropy,
    /// Mean `KL(softmax(reference) || softmax(logits))` with the reference
    /// side treated as a detached target: gradients flow only through the
    /// logits of the evaluated parameters.
    KlToReference(Logits),
}

/// Runs the network on a batch and returns the logits.
pub fn forward(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Logits> {
    if batch.dim != spec.input_dim() {
        return Err(Error::Config(format!(
            "batch dim {} does not match model input dim {}",
            batch.dim,
            spec.input_dim()
        )));
    }
    let trace = model::run_forward(spec, params, &batch.inputs, batch.len(), false)?;
    let data = trace.acts.into_iter().next_back().expect("output present");
    Ok(Logits {
        data,
        rows: batch.len(),
        cols: spec.num_classes(),
    })
}

/// Loss value and the exact analytic gradient with respect to the parameters.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
    loss: &Loss,
) -> Result<(f64, ParamVector)> {
    if batch.dim != spec.input_dim() {
        return Err(Error::Config(format!(
            "batch dim {} does not match model input dim {}",
            batch.dim,
            spec.input_dim()
        )));
    }
    let n = batch.len();
    let classes = spec.num_classes();
    let trace = model::run_forward(spec, params, &batch.inputs, n, true)?;
    let logits = trace.acts.last().expect("output present");
    let inv_n = 1.0 / n as f64;
    let mut dlogits = vec![0.0; n * classes];
    let mut total = 0.0;
    match loss {
        Loss::CrossEntropy => {
            for (s, &label) in batch.labels.iter().enumerate() {
                if label >= classes {
                    return Err(Error::Config(format!(
                        "label {label} out of range for {classes} classes"
                    )));
                }
                let row = &logits[s * classes..(s + 1) * classes];
                let (probs, log_norm, max) = softmax_with_log_norm(row);
                total -= (row[label] - max - log_norm) * inv_n;
                let drow = &mut dlogits[s * classes..(s + 1) * classes];
                for c in 0..classes {
                    drow[c] = (probs[c] - if c == label { 1.0 } else { 0.0 }) * inv_n;
                }
            }
        }
        Loss::KlToReference(reference) => {
            if reference.rows != n || reference.cols != classes {
                return Err(Error::Config(format!(
                    "reference logits shape ({}, {}) does not match batch ({n}, {classes})",
                    reference.rows, reference.cols
                )));
            }
            for s in 0..n {
                let row = &logits[s * classes..(s + 1) * classes];
                total += kl_divergence(reference.row(s), row) * inv_n;
                let q = softmax(row);
                let p = softmax(reference.row(s));
                let drow = &mut dlogits[s * classes..(s + 1) * classes];
                for c in 0..classes {
                    drow[c] = (q[c] - p[c]) * inv_n;
                }
            }
        }
    }
    let grad = model::run_backward(spec, params, &trace, n, dlogits);
    Ok((total, grad))
}

/// `KL(softmax(p_logits) || softmax(q_logits))`, always >= 0.
pub fn kl_divergence(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    assert_eq!(
        p_logits.len(),
        q_logits.len(),
        "kl_divergence: length mismatch"
    );
    assert!(p_logits.len() >= 2, "kl_divergence: need >= 2 classes");
    let p = softmax(p_logits);
    let q = softmax(q_logits);
    let mut acc = 0.0;
    for (pi, qi) in p.iter().zip(q.iter()) {
        acc += pi * (pi.ln() - qi.ln());
    }
    acc.max(0.0)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let (probs, _, _) = softmax_with_log_norm(logits);
    probs
}

fn softmax_with_log_norm(logits: &[f64]) -> (Vec<f64>, f64, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    (probs, sum.ln(), max)
}

/// Argmax per row, ties broken to the lowest class index.
pub fn predicted_classes(logits: &Logits) -> Vec<usize> {
    (0..logits.rows)
        .map(|s| {
            let row = logits.row(s);
            let mut best = 0;
            for (c, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of batch samples whose argmax prediction matches the label.
pub fn batch_accuracy(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    let logits = forward(spec, params, batch)?;
    let preds = predicted_classes(&logits);
    let correct = preds
        .iter()
        .zip(batch.labels.iter())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{splitmix64, uniform01};

    fn tiny_spec() -> ModelSpec {
        ModelSpec::new(
            (1, 1, 6),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { outputs: 3 },
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = tiny_spec();
        let batch = Batch::new(vec![0.3, -1.0, 2.0, 0.0, 0.5, -0.25], vec![1], 6).unwrap();
        let logits = forward(&spec, &ParamVector::zeros(spec.param_count()), &batch).unwrap();
        assert!(logits.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_dense_layer_is_identity() {
        let spec = ModelSpec::new(
            (1, 1, 2),
            vec![LayerSpec::Flatten, LayerSpec::Dense { outputs: 2 }],
            2,
        )
        .unwrap();
        // W = I (row-major), b = 0.
        let params = ParamVector::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let batch = Batch::new(vec![1.0, 0.0], vec![0], 2).unwrap();
        let logits = forward(&spec, &params, &batch).unwrap();
        assert_eq!(logits.data, vec![1.0, 0.0]);
    }

    #[test]
    fn forward_matches_independent_reference() {
        // Weights, biases and inputs generated from splitmix64 stream 42 in
        // the exact order below; expected logits computed with an independent
        // double-precision implementation of the same arithmetic.
        let mut state = 42u64;
        let mut gen = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| 2.0 * uniform01(splitmix64(&mut state)) - 1.0)
                .collect()
        };
        let w1 = gen(4 * 6);
        let b1 = gen(4);
        let w2 = gen(3 * 4);
        let b2 = gen(3);
        let xs = gen(2 * 6);
        let mut values = w1;
        values.extend(b1);
        values.extend(w2);
        values.extend(b2);
        let spec = tiny_spec();
        assert_eq!(spec.param_count(), values.len());
        let batch = Batch::new(xs, vec![0, 1], 6).unwrap();
        let logits = forward(&spec, &ParamVector::new(values), &batch).unwrap();
        let expected = [
            [1.478264731867032, -0.3211021053501329, -0.3331399930597332],
            [0.6383230682118116, -0.40778145200756943, 0.06673555471620318],
        ];
        for s in 0..2 {
            for c in 0..3 {
                let got = logits.row(s)[c];
                let want = expected[s][c];
                assert!(
                    (got - want).abs() < 1e-12,
                    "logits[{s}][{c}]: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn forward_shape_mismatch_is_config_error() {
        let spec = tiny_spec();
        let batch = Batch::new(vec![0.0; 4], vec![0], 4).unwrap();
        assert!(matches!(
            forward(&spec, &ParamVector::zeros(spec.param_count()), &batch),
            Err(Error::Config(_))
        ));
        let short = ParamVector::zeros(3);
        let ok_batch = Batch::new(vec![0.0; 6], vec![0], 6).unwrap();
        assert!(matches!(
            forward(&spec, &short, &ok_batch),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_classes() {
        let spec = tiny_spec();
        let params = ParamVector::zeros(spec.param_count());
        let batch = Batch::new(vec![0.1; 12], vec![2, 0], 6).unwrap();
        let (loss, _) = loss_and_grad(&spec, &params, &batch, &Loss::CrossEntropy).unwrap();
        let ln3 = 1.0986122886681096914;
        assert!((loss - ln3).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn kl_to_own_logits_is_zero_loss_and_grad() {
        let spec = tiny_spec();
        let params = spec.init_params(5);
        let batch = Batch::new(vec![0.4, 0.2, 0.9, 0.1, 0.5, 0.8], vec![1], 6).unwrap();
        let reference = forward(&spec, &params, &batch).unwrap();
        let (loss, grad) =
            loss_and_grad(&spec, &params, &batch, &Loss::KlToReference(reference)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn kl_divergence_closed_forms() {
        // softmax([0, 0]) = [1/2, 1/2]; softmax([0, ln 3]) = [1/4, 3/4].
        let p = [0.0, 0.0];
        let q = [0.0, 3.0f64.ln()];
        let forward_kl = kl_divergence(&p, &q);
        let reverse_kl = kl_divergence(&q, &p);
        assert!((forward_kl - 0.14384103622589046).abs() < 1e-9);
        assert!((reverse_kl - 0.13081203594113696).abs() < 1e-9);
        assert!(forward_kl != reverse_kl, "KL must be asymmetric here");
        assert_eq!(kl_divergence(&[1.0, -2.0, 0.5], &[1.0, -2.0, 0.5]), 0.0);
    }

    #[test]
    fn softmax_normalizes_to_one() {
        let p = softmax(&[3.0, -100.0, 55.5, 0.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn determinism_bitwise() {
        let spec = tiny_spec();
        let params = spec.init_params(11);
        let batch = Batch::new(vec![0.25; 12], vec![0, 2], 6).unwrap();
        let a = forward(&spec, &params, &batch).unwrap();
        let b = forward(&spec, &params, &batch).unwrap();
        assert!(a
            .data
            .iter()
            .zip(b.data.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let (l1, g1) = loss_and_grad(&spec, &params, &batch, &Loss::CrossEntropy).unwrap();
        let (l2, g2) = loss_and_grad(&spec, &params, &batch, &Loss::CrossEntropy).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.bitwise_eq(&g2));
    }

    #[test]
    fn predicted_classes_break_ties_low() {
        let logits = Logits {
            data: vec![1.0, 1.0, 0.0, 0.5, 2.0, 2.0],
            rows: 2,
            cols: 3,
        };
        assert_eq!(predicted_classes(&logits), vec![0, 1]);
    }

    #[test]
    fn conv_spec_shapes_and_forward() {
        let spec = ModelSpec::small_conv(3);
        let params = spec.init_params(3);
        let batch = Batch::new(vec![0.5; 256], vec![1], 256).unwrap();
        let logits = forward(&spec, &params, &batch).unwrap();
        assert_eq!(logits.rows, 1);
        assert_eq!(logits.cols, 3);
        assert!(logits.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn conv_forward_matches_hand_computed_case() {
        // 2x2 single-channel image, one 3x3 kernel, padding 1:
        // x = [[1, 2], [3, 4]], k = all ones, bias 0 -> each output is the
        // sum of the in-bounds neighbourhood = 10 at every position.
        let spec = ModelSpec::new(
            (1, 2, 2),
            vec![
                LayerSpec::Conv3x3 { out_channels: 1 },
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 2 },
            ],
            2,
        )
        .unwrap();
        let mut values = vec![1.0; 9]; // kernel
        values.push(0.0); // conv bias
        values.extend(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]); // dense row 0 picks first pixel
        values.extend(vec![0.0, 0.0]); // dense bias
        let batch = Batch::new(vec![1.0, 2.0, 3.0, 4.0], vec![0], 4).unwrap();
        let logits = forward(&spec, &ParamVector::new(values), &batch).unwrap();
        assert_eq!(logits.row(0)[0], 10.0);
        assert_eq!(logits.row(0)[1], 0.0);
    }
}
