//! Central-difference gradient checks for every layer and the whole network,
//! in `f64`.
//!
//! Each layer is wrapped in a scalar loss `L = Σ out ⊙ R` with a random
//! upstream gradient `R`, so the analytic backward pass receives `R` and must
//! reproduce `∂L/∂input` and `∂L/∂params`. ReLU and max-pooling are only
//! piecewise differentiable; inputs are drawn away from their kinks, and in
//! the whole-network check a coordinate whose ±step perturbation changes any
//! ReLU mask or pooling winner is replaced by another one.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{backward, forward, LayerKind, LayerSpec, NetworkParams, NUM_CLASSES};
use crate::par::Execution;
use crate::rng;
use crate::tensor::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward,
    relu_forward, softmax_cross_entropy, ConvKernel, Tensor,
};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const REL_FLOOR: f64 = 1e-3;
/// Acceptance threshold on [`rel_error`].
pub const TOLERANCE: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub instances: usize,
    /// Coordinates compared across all instances.
    pub coordinates: usize,
    /// Whole-network coordinates replaced because the step crossed a kink.
    pub kinks_skipped: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    fn new(name: &'static str, instances: usize) -> Self {
        Self {
            name,
            instances,
            coordinates: 0,
            kinks_skipped: 0,
            max_rel_error: 0.0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.coordinates += 1;
        let e = rel_error(analytic, numeric);
        // NaN must register as a failure
        if !(e <= self.max_rel_error) {
            self.max_rel_error = e;
        }
    }

    pub fn passed(&self) -> bool {
        self.instances > 0 && self.coordinates > 0 && self.max_rel_error <= TOLERANCE
    }
}

fn random(shape: &[usize], lo: f64, hi: f64, r: &mut rng::Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values in ±1 at least `margin` away from zero.
fn away_from_zero(shape: &[usize], margin: f64, r: &mut rng::Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = r.random_range(margin..1.0);
        if r.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central difference of `loss` with respect to every element of `x`.
fn numeric_grad(x: &Tensor<f64>, mut loss: impl FnMut(&Tensor<f64>) -> Result<f64>) -> Result<Vec<f64>> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let up = loss(&probe)?;
            probe.data_mut()[i] = orig - STEP;
            let down = loss(&probe)?;
            probe.data_mut()[i] = orig;
            Ok((up - down) / (2.0 * STEP))
        })
        .collect()
}

fn compare(report: &mut GradCheckReport, analytic: &Tensor<f64>, numeric: &[f64]) {
    for (&a, &n) in analytic.data().iter().zip(numeric) {
        report.record(a, n);
    }
}

pub fn check_conv(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("conv", instances);
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 11, k as u64));
        let (c, f) = (r.random_range(1..=3), r.random_range(1..=3));
        let m = [1, 3, 5][r.random_range(0..3)];
        let (h, w) = (m + r.random_range(0..5), m + r.random_range(0..5));
        let x = random(&[c, h, w], -1.0, 1.0, r);
        let kernel = ConvKernel::new(random(&[f, c, m, m], -1.0, 1.0, r), random(&[f], -1.0, 1.0, r))?;
        let up = random(&[f, h - m + 1, w - m + 1], -1.0, 1.0, r);
        let g = conv2d_backward(&x, &kernel, &up)?;

        let nx = numeric_grad(&x, |x| Ok(dot(&conv2d_forward(x, &kernel)?, &up)))?;
        compare(&mut report, &g.input, &nx);
        let nw = numeric_grad(&kernel.weights, |wt| {
            let kk = ConvKernel::new(wt.clone(), kernel.bias.clone())?;
            Ok(dot(&conv2d_forward(&x, &kk)?, &up))
        })?;
        compare(&mut report, &g.weights, &nw);
        let nb = numeric_grad(&kernel.bias, |b| {
            let kk = ConvKernel::new(kernel.weights.clone(), b.clone())?;
            Ok(dot(&conv2d_forward(&x, &kk)?, &up))
        })?;
        compare(&mut report, &g.bias, &nb);
    }
    Ok(report)
}

pub fn check_maxpool(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("maxpool", instances);
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 12, k as u64));
        let (c, h, w) = (
            r.random_range(1..=3),
            2 * r.random_range(1..=4),
            2 * r.random_range(1..=4),
        );
        // distinct values 0.01 apart: every window has a clear winner
        let mut order: Vec<usize> = (0..c * h * w).collect();
        order.shuffle(r);
        let x = Tensor::new(&[c, h, w], order.iter().map(|&v| v as f64 * 0.01 - 0.5).collect())?;
        let (y, map) = maxpool2x2_forward(&x)?;
        let up = random(y.shape(), -1.0, 1.0, r);
        let g = maxpool2x2_backward(&map, &up)?;
        let n = numeric_grad(&x, |x| Ok(dot(&maxpool2x2_forward(x)?.0, &up)))?;
        compare(&mut report, &g, &n);
    }
    Ok(report)
}

pub fn check_fc(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("fc", instances);
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 13, k as u64));
        let shape = [r.random_range(1..=3), r.random_range(1..=4), r.random_range(1..=4)];
        let n_in: usize = shape.iter().product();
        let n_out = r.random_range(1..=10);
        let x = random(&shape, -1.0, 1.0, r);
        let wt = random(&[n_out, n_in], -1.0, 1.0, r);
        let b = random(&[n_out], -1.0, 1.0, r);
        let up = random(&[n_out], -1.0, 1.0, r);
        let g = fc_backward(&x, &wt, &up)?;

        compare(
            &mut report,
            &g.input,
            &numeric_grad(&x, |x| Ok(dot(&fc_forward(x, &wt, &b)?, &up)))?,
        );
        compare(
            &mut report,
            &g.weights,
            &numeric_grad(&wt, |wt| Ok(dot(&fc_forward(&x, wt, &b)?, &up)))?,
        );
        compare(
            &mut report,
            &g.bias,
            &numeric_grad(&b, |b| Ok(dot(&fc_forward(&x, &wt, b)?, &up)))?,
        );
    }
    Ok(report)
}

pub fn check_relu(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("relu", instances);
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 14, k as u64));
        let shape = [r.random_range(1..=3), r.random_range(1..=6), r.random_range(1..=6)];
        let x = away_from_zero(&shape, 1e-3, r);
        let up = random(&shape, -1.0, 1.0, r);
        let g = relu_backward(&x, &up)?;
        compare(&mut report, &g, &numeric_grad(&x, |x| Ok(dot(&relu_forward(x), &up)))?);
    }
    Ok(report)
}

pub fn check_softmax_ce(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("softmax-ce", instances);
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 15, k as u64));
        let classes = r.random_range(2..=6);
        let class = r.random_range(0..classes);
        let logits = random(&[classes], -5.0, 5.0, r);
        let g = softmax_cross_entropy(&logits, class)?;
        let n = numeric_grad(&logits, |z| Ok(softmax_cross_entropy(z, class)?.loss))?;
        compare(&mut report, &g.grad_logits, &n);
    }
    Ok(report)
}

/// ReLU masks and pooling winners of a batch: a step that changes this
/// crossed a kink.
fn signature(params: &NetworkParams<f64>, x: &Tensor<f64>) -> Result<Vec<usize>> {
    let (_, cache) = forward(params, x, Execution::Sequential)?;
    let mut sig = Vec::new();
    for s in &cache.samples {
        for (i, kind) in params.spec().layers().iter().enumerate() {
            match kind {
                LayerKind::Relu => sig.extend(s.inputs[i].data().iter().map(|&v| usize::from(v > 0.0))),
                LayerKind::MaxPool2 => sig.extend_from_slice(s.argmax[i].as_ref().expect("pool map").winners()),
                _ => {}
            }
        }
    }
    Ok(sig)
}

fn mean_loss(params: &NetworkParams<f64>, x: &Tensor<f64>, labels: &[usize]) -> Result<f64> {
    let (logits, _) = forward(params, x, Execution::Sequential)?;
    let mut total = 0.0;
    for (row, &l) in logits.data().chunks_exact(NUM_CLASSES).zip(labels) {
        total += softmax_cross_entropy(&Tensor::new(&[NUM_CLASSES], row.to_vec())?, l)?.loss;
    }
    Ok(total / labels.len() as f64)
}

/// The full LeNet-5 stack on a batch of two 28×28 inputs; `per_tensor`
/// random coordinates of every weight and bias tensor per instance.
pub fn check_network(instances: usize, per_tensor: usize, seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("network", instances);
    let spec = LayerSpec::default();
    let [c, h, w] = spec.input();
    for k in 0..instances {
        let r = &mut rng::seeded(rng::derive(seed, 16, k as u64));
        let mut params = NetworkParams::<f64>::init(&spec, rng::derive(seed, 17, k as u64))?;
        // biases start at zero; give them values so their gradients matter
        for bias in params.tensors_mut().filter(|t| t.rank() == 1) {
            bias.data_mut().iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
        }
        let x = random(&[2, c, h, w], 0.0, 1.0, r);
        let labels = [r.random_range(0..NUM_CLASSES), r.random_range(0..NUM_CLASSES)];
        let (_, cache) = forward(&params, &x, Execution::Sequential)?;
        let (grads, _) = backward(&params, &cache, &labels, Execution::Sequential)?;
        let base = signature(&params, &x)?;

        let n_tensors = params.tensors().count();
        for t in 0..n_tensors {
            let len = params.tensors().nth(t).expect("tensor").len();
            let mut found = 0;
            let mut attempts = 0;
            while found < per_tensor.min(len) {
                attempts += 1;
                if attempts > 50 * per_tensor {
                    return Err(Error::InvalidArgument(format!(
                        "no kink-free coordinate found in tensor {t} of instance {k}"
                    )));
                }
                let i = r.random_range(0..len);
                let probe = |delta: f64| -> Result<(f64, Vec<usize>)> {
                    let mut p = params.clone();
                    let v = &mut p.tensors_mut().nth(t).expect("tensor").data_mut()[i];
                    *v += delta;
                    Ok((mean_loss(&p, &x, &labels)?, signature(&p, &x)?))
                };
                let (up, sig_up) = probe(STEP)?;
                let (down, sig_down) = probe(-STEP)?;
                if sig_up != base || sig_down != base {
                    report.kinks_skipped += 1;
                    continue;
                }
                let analytic = grads.tensors().nth(t).expect("tensor").data()[i];
                report.record(analytic, (up - down) / (2.0 * STEP));
                found += 1;
            }
        }
    }
    Ok(report)
}

/// Every layer check plus the whole network, `instances` each.
pub fn check_all(instances: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        check_conv(instances, seed)?,
        check_maxpool(instances, seed)?,
        check_fc(instances, seed)?,
        check_relu(instances, seed)?,
        check_softmax_ce(instances, seed)?,
        check_network(instances, 3, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(2.0, 2.0), 0.0);
        assert!((rel_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(rel_error(0.0, 1e-9), 1e-9 / REL_FLOOR);
        assert!(rel_error(1.0, f64::NAN).is_nan());
    }

    #[test]
    fn nan_registers_as_failure() {
        let mut r = GradCheckReport::new("x", 1);
        r.record(1.0, f64::NAN);
        assert!(!r.passed());
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // halve the analytic ReLU gradient: the check must notice
        let r = &mut rng::seeded(3);
        let x = away_from_zero(&[1, 3, 3], 1e-3, r);
        let up = random(&[1, 3, 3], 0.5, 1.0, r);
        let mut g = relu_backward(&x, &up).unwrap();
        g.scale(0.5);
        let n = numeric_grad(&x, |x| Ok(dot(&relu_forward(x), &up))).unwrap();
        let mut report = GradCheckReport::new("relu", 1);
        compare(&mut report, &g, &n);
        assert!(!report.passed());
    }

    #[test]
    fn layers_pass_on_a_few_instances() {
        for rep in [
            check_conv(3, 9).unwrap(),
            check_maxpool(3, 9).unwrap(),
            check_fc(3, 9).unwrap(),
            check_relu(3, 9).unwrap(),
            check_softmax_ce(3, 9).unwrap(),
        ] {
            assert!(rep.passed(), "{rep:?}");
        }
    }
}
