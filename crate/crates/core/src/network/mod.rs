//! The LeNet-5 model: parameters, batched forward/backward, prediction and
//! checkpoints.
//!
//! Samples in a batch are processed independently (in parallel when enabled).
//! Per-sample gradients are summed in fixed chunks of [`GRAD_CHUNK`] samples
//! and the chunk sums are added in index order, so the result does not depend
//! on the thread count.

mod checkpoint;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use spec::{LayerKind, LayerSpec, NUM_CLASSES};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;
use crate::tensor::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward,
    relu_forward, softmax, softmax_cross_entropy, ArgmaxMap, ConvKernel, Scalar, Tensor,
};

/// Samples per partial gradient sum.
pub const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T = f32> {
    Conv(ConvKernel<T>),
    Fc { weights: Tensor<T>, bias: Tensor<T> },
    None,
}

impl<T: Scalar> LayerParams<T> {
    fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        let pair = match self {
            LayerParams::Conv(k) => Some([&k.weights, &k.bias]),
            LayerParams::Fc { weights, bias } => Some([weights, bias]),
            LayerParams::None => None,
        };
        pair.into_iter().flatten()
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        let pair = match self {
            LayerParams::Conv(k) => Some([&mut k.weights, &mut k.bias]),
            LayerParams::Fc { weights, bias } => Some([weights, bias]),
            LayerParams::None => None,
        };
        pair.into_iter().flatten()
    }
}

/// Weights and biases for every layer of a [`LayerSpec`]. Also used for
/// gradients, which share the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    spec: LayerSpec,
    layers: Vec<LayerParams<T>>,
    seed: Option<u64>,
}

impl<T: Scalar> NetworkParams<T> {
    /// Xavier-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init(spec: &LayerSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut r = rng::seeded(rng::derive(seed, rng::stream::INIT, 0));
        let mut prev: Vec<usize> = spec.input().to_vec();
        let mut layers = Vec::with_capacity(shapes.len());
        for (kind, out) in spec.layers().iter().zip(&shapes) {
            let p = match *kind {
                LayerKind::Conv { filters, size } => {
                    let channels = prev[0];
                    let bound = xavier_bound(channels * size * size, filters * size * size);
                    let weights = uniform(&[filters, channels, size, size], bound, &mut r);
                    LayerParams::Conv(ConvKernel::new(weights, Tensor::zeros(&[filters]))?)
                }
                LayerKind::Fc { outputs } => {
                    let inputs = prev[0];
                    let bound = xavier_bound(inputs, outputs);
                    LayerParams::Fc {
                        weights: uniform(&[outputs, inputs], bound, &mut r),
                        bias: Tensor::zeros(&[outputs]),
                    }
                }
                _ => LayerParams::None,
            };
            layers.push(p);
            prev = out.clone();
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            seed: Some(seed),
        })
    }

    pub fn zeros(spec: &LayerSpec) -> Result<Self> {
        let mut p = Self::init(spec, 0)?;
        p.tensors_mut().for_each(|t| t.data_mut().fill(T::zero()));
        p.seed = None;
        Ok(p)
    }

    pub(crate) fn from_tensors(spec: &LayerSpec, tensors: Vec<Tensor<T>>, seed: Option<u64>) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let expected = p.tensors().count();
        if tensors.len() != expected {
            return Err(Error::dim(format!(
                "expected {expected} tensors, got {}",
                tensors.len()
            )));
        }
        for (dst, src) in p.tensors_mut().zip(tensors) {
            src.expect_shape(dst.shape())?;
            *dst = src;
        }
        p.seed = seed;
        Ok(p)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    /// Weight then bias of each parameterised layer, in layer order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(LayerParams::tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv(k) => LayerParams::Conv(ConvKernel {
                    weights: k.weights.cast(),
                    bias: k.bias.cast(),
                }),
                LayerParams::Fc { weights, bias } => LayerParams::Fc {
                    weights: weights.cast(),
                    bias: bias.cast(),
                },
                LayerParams::None => LayerParams::None,
            })
            .collect();
        NetworkParams {
            spec: self.spec.clone(),
            layers,
            seed: self.seed,
        }
    }

    fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform<T: Scalar>(shape: &[usize], bound: f64, r: &mut rng::Rng) -> Tensor<T> {
    let hi = T::from_f64(bound);
    Tensor::from_fn(shape, |_| {
        let v = T::from_f64(r.random_range(-bound..=bound));
        v.max(-hi).min(hi)
    })
}

/// Everything one sample's forward pass leaves behind for its backward pass.
#[derive(Clone, Debug)]
pub struct SampleCache<T = f32> {
    /// Input to each layer.
    pub inputs: Vec<Tensor<T>>,
    /// Pool argmax maps, `Some` only at pooling layers.
    pub argmax: Vec<Option<ArgmaxMap>>,
    pub logits: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ActivationCache<T = f32> {
    pub samples: Vec<SampleCache<T>>,
}

impl<T> ActivationCache<T> {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }
}

fn split_batch<T: Scalar>(spec: &LayerSpec, batch: &Tensor<T>) -> Result<usize> {
    let [c, h, w] = spec.input();
    match *batch.shape() {
        [b, bc, bh, bw] if (bc, bh, bw) == (c, h, w) => Ok(b),
        _ => Err(Error::dim(format!(
            "batch must be [B, {c}, {h}, {w}], got {:?}",
            batch.shape()
        ))),
    }
}

fn sample<T: Scalar>(spec: &LayerSpec, batch: &Tensor<T>, i: usize) -> Tensor<T> {
    let [c, h, w] = spec.input();
    let n = c * h * w;
    Tensor::new(&[c, h, w], batch.data()[i * n..(i + 1) * n].to_vec()).expect("sample shape")
}

fn forward_sample<T: Scalar>(params: &NetworkParams<T>, x: Tensor<T>, keep: bool) -> Result<SampleCache<T>> {
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(if keep { n } else { 0 });
    let mut argmax = Vec::with_capacity(if keep { n } else { 0 });
    let mut cur = x;
    for (kind, p) in params.spec.layers().iter().zip(&params.layers) {
        let (next, map) = match (kind, p) {
            (LayerKind::Conv { .. }, LayerParams::Conv(k)) => (conv2d_forward(&cur, k)?, None),
            (LayerKind::Relu, _) => (relu_forward(&cur), None),
            (LayerKind::MaxPool2, _) => {
                let (y, m) = maxpool2x2_forward(&cur)?;
                (y, Some(m))
            }
            (LayerKind::Flatten, _) => {
                let len = cur.len();
                (cur.clone().reshape(&[len])?, None)
            }
            (LayerKind::Fc { .. }, LayerParams::Fc { weights, bias }) => (fc_forward(&cur, weights, bias)?, None),
            _ => return Err(Error::dim(format!("parameters do not match layer {kind}"))),
        };
        if keep {
            inputs.push(cur);
            argmax.push(map);
        }
        cur = next;
    }
    Ok(SampleCache {
        inputs,
        argmax,
        logits: cur,
    })
}

/// Returns the per-layer gradients and the sample loss.
fn backward_sample<T: Scalar>(
    params: &NetworkParams<T>,
    cache: &SampleCache<T>,
    label: usize,
) -> Result<(NetworkParams<T>, T)> {
    let lg = softmax_cross_entropy(&cache.logits, label)?;
    let mut grads = Vec::with_capacity(params.layers.len());
    let mut g = lg.grad_logits;
    let layers = params.spec.layers().iter().zip(&params.layers);
    for (i, (kind, p)) in layers.enumerate().rev() {
        let input = &cache.inputs[i];
        let (gp, gx) = match (kind, p) {
            (LayerKind::Conv { .. }, LayerParams::Conv(k)) => {
                let cg = conv2d_backward(input, k, &g)?;
                (
                    LayerParams::Conv(ConvKernel {
                        weights: cg.weights,
                        bias: cg.bias,
                    }),
                    cg.input,
                )
            }
            (LayerKind::Fc { .. }, LayerParams::Fc { weights, .. }) => {
                let fg = fc_backward(input, weights, &g)?;
                (
                    LayerParams::Fc {
                        weights: fg.weights,
                        bias: fg.bias,
                    },
                    fg.input,
                )
            }
            (LayerKind::Relu, _) => (LayerParams::None, relu_backward(input, &g)?),
            (LayerKind::MaxPool2, _) => {
                let map = cache.argmax[i]
                    .as_ref()
                    .ok_or_else(|| Error::dim("missing argmax map"))?;
                (LayerParams::None, maxpool2x2_backward(map, &g)?)
            }
            (LayerKind::Flatten, _) => (LayerParams::None, g.reshape(input.shape())?),
            _ => return Err(Error::dim(format!("parameters do not match layer {kind}"))),
        };
        grads.push(gp);
        g = gx;
    }
    grads.reverse();
    Ok((
        NetworkParams {
            spec: params.spec.clone(),
            layers: grads,
            seed: None,
        },
        lg.loss,
    ))
}

/// Batched forward pass over `[B, C, H, W]`; returns `[B, classes]` logits.
pub fn forward<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &Tensor<T>,
    exec: Execution,
) -> Result<(Tensor<T>, ActivationCache<T>)> {
    let b = split_batch(&params.spec, batch)?;
    let samples = par::try_map_indexed(exec, b, |i| {
        forward_sample(params, sample(&params.spec, batch, i), true)
    })?;
    let logits = stack_logits(samples.iter().map(|s| &s.logits), b)?;
    Ok((logits, ActivationCache { samples }))
}

fn stack_logits<'a, T: Scalar>(rows: impl Iterator<Item = &'a Tensor<T>>, b: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(b * NUM_CLASSES);
    rows.for_each(|r| data.extend_from_slice(r.data()));
    Tensor::new(&[b, NUM_CLASSES], data)
}

/// Batch-mean gradients and batch-mean cross-entropy.
pub fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    cache: &ActivationCache<T>,
    labels: &[usize],
    exec: Execution,
) -> Result<(NetworkParams<T>, T)> {
    let b = cache.batch_size();
    if b == 0 || labels.len() != b {
        return Err(Error::dim(format!("{} labels for a batch of {b}", labels.len())));
    }
    if cache.samples.iter().any(|s| s.inputs.len() != params.layers.len()) {
        return Err(Error::dim("activation cache does not match the network"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let chunks = b.div_ceil(GRAD_CHUNK);
    let partial = par::try_map_indexed(exec, chunks, |c| {
        let lo = c * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(b);
        let (mut acc, mut loss) = backward_sample(params, &cache.samples[lo], labels[lo])?;
        for (sample, &label) in cache.samples[lo + 1..hi].iter().zip(&labels[lo + 1..hi]) {
            let (g, l) = backward_sample(params, sample, label)?;
            acc.add_assign(&g)?;
            loss = loss + l;
        }
        Ok::<_, Error>((acc, loss))
    })?;
    let mut it = partial.into_iter();
    let (mut total, mut loss) = it.next().expect("at least one chunk");
    for (g, l) in it {
        total.add_assign(&g)?;
        loss = loss + l;
    }
    let inv = T::one() / T::from_f64(b as f64);
    total.tensors_mut().for_each(|t| t.scale(inv));
    Ok((total, loss * inv))
}

/// `[B, classes]` logits without keeping activations.
pub fn forward_logits<T: Scalar>(params: &NetworkParams<T>, batch: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
    let b = split_batch(&params.spec, batch)?;
    let rows = par::try_map_indexed(exec, b, |i| {
        forward_sample(params, sample(&params.spec, batch, i), false).map(|s| s.logits)
    })?;
    stack_logits(rows.iter(), b)
}

/// Class labels (argmax, ties to the lower index) and `[B, classes]`
/// softmax probabilities.
pub fn predict<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &Tensor<T>,
    exec: Execution,
) -> Result<(Vec<usize>, Tensor<T>)> {
    let logits = forward_logits(params, batch, exec)?;
    let b = logits.shape()[0];
    let probs: Vec<Vec<T>> = logits.data().chunks_exact(NUM_CLASSES).map(softmax).collect();
    let labels = probs.iter().map(|p| argmax(p)).collect();
    let flat = probs.into_iter().flatten().collect();
    Ok((labels, Tensor::new(&[b, NUM_CLASSES], flat)?))
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Output shape after each layer of one sample's forward pass.
pub fn intermediate_shapes<T: Scalar>(params: &NetworkParams<T>, input: &Tensor<T>) -> Result<Vec<Vec<usize>>> {
    let s = forward_sample(params, input.clone(), true)?;
    let mut shapes: Vec<Vec<usize>> = s.inputs.iter().skip(1).map(|t| t.shape().to_vec()).collect();
    shapes.push(s.logits.shape().to_vec());
    Ok(shapes)
}
