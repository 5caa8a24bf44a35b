use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Filter bank of a valid, stride-1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T = f32> {
    /// `[F, C, m, m]`
    pub weights: Tensor<T>,
    /// `[F]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let k = Self { weights, bias };
        k.validate()?;
        Ok(k)
    }

    pub fn zeros(filters: usize, channels: usize, size: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[filters, channels, size, size]),
            bias: Tensor::zeros(&[filters]),
        }
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn size(&self) -> usize {
        self.weights.shape()[2]
    }

    fn validate(&self) -> Result<()> {
        match *self.weights.shape() {
            [f, _, a, b] if a == b => {
                if self.bias.shape() != [f] {
                    return Err(Error::dim(format!(
                        "conv bias shape {:?} does not match {f} filters",
                        self.bias.shape()
                    )));
                }
                Ok(())
            }
            _ => Err(Error::dim(format!(
                "conv weights must be [F, C, m, m], got {:?}",
                self.weights.shape()
            ))),
        }
    }

    fn output_dims(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        self.validate()?;
        let (c, h, w) = input.dims3("conv2d input")?;
        let m = self.size();
        if c != self.channels() {
            return Err(Error::dim(format!(
                "conv2d: input has {c} channels, kernel expects {}",
                self.channels()
            )));
        }
        if h < m || w < m {
            return Err(Error::dim(format!("conv2d: input {h}x{w} smaller than {m}x{m} kernel")));
        }
        Ok((c, h - m + 1, w - m + 1, m))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Valid, stride-1 cross-correlation:
/// `out[f,i,j] = bias[f] + Σ_c Σ_a Σ_b input[c,i+a,j+b] · w[f,c,a,b]`.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, kernel: &ConvKernel<T>) -> Result<Tensor<T>> {
    let (channels, oh, ow, m) = kernel.output_dims(input)?;
    let (_, h, w) = input.dims3("conv2d input")?;
    let filters = kernel.filters();
    let x = input.data();
    let wt = kernel.weights.data();
    let mut out = vec![T::zero(); filters * oh * ow];

    for (f, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(kernel.bias.data()[f]);
        for c in 0..channels {
            let src = &x[c * h * w..(c + 1) * h * w];
            for a in 0..m {
                for b in 0..m {
                    let wv = wt[((f * channels + c) * m + a) * m + b];
                    for i in 0..oh {
                        let row = &src[(i + a) * w + b..(i + a) * w + b + ow];
                        let dst = &mut plane[i * ow..(i + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[filters, oh, ow], out)
}

/// Gradients of [`conv2d_forward`].
///
/// The input gradient is the full correlation of `grad_out` with the kernel,
/// `δx[c,p,q] = Σ_f Σ_a Σ_b δy[f,p−a,q−b] · w[f,c,a,b]`, accumulated here by
/// scattering each output gradient back over its receptive field.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &ConvKernel<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (channels, oh, ow, m) = kernel.output_dims(input)?;
    let (_, h, w) = input.dims3("conv2d input")?;
    let filters = kernel.filters();
    grad_out.expect_shape(&[filters, oh, ow])?;

    let x = input.data();
    let g = grad_out.data();
    let wt = kernel.weights.data();
    let mut gx = vec![T::zero(); channels * h * w];
    let mut gw = vec![T::zero(); wt.len()];
    let mut gb = vec![T::zero(); filters];

    for f in 0..filters {
        let gplane = &g[f * oh * ow..(f + 1) * oh * ow];
        gb[f] = gplane.iter().copied().sum();
        for c in 0..channels {
            let src = &x[c * h * w..(c + 1) * h * w];
            let dst = &mut gx[c * h * w..(c + 1) * h * w];
            for a in 0..m {
                for b in 0..m {
                    let widx = ((f * channels + c) * m + a) * m + b;
                    let wv = wt[widx];
                    let mut acc = T::zero();
                    for i in 0..oh {
                        let grow = &gplane[i * ow..(i + 1) * ow];
                        let off = (i + a) * w + b;
                        let xrow = &src[off..off + ow];
                        for (&gv, &xv) in grow.iter().zip(xrow) {
                            acc = acc + gv * xv;
                        }
                        for (d, &gv) in dst[off..off + ow].iter_mut().zip(grow) {
                            *d = *d + gv * wv;
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }

    Ok(ConvGrads {
        input: Tensor::new(&[channels, h, w], gx)?,
        weights: Tensor::new(kernel.weights.shape(), gw)?,
        bias: Tensor::new(&[filters], gb)?,
    })
}
