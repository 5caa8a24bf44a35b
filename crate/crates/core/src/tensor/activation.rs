use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(forward_input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(forward_input.shape())?;
    let data = forward_input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(forward_input.shape(), data)
}

/// Loss value and gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad<T = f32> {
    pub loss: T,
    pub probabilities: Tensor<T>,
    pub grad_logits: Tensor<T>,
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `loss = −ln p[class]`, `grad = p − onehot(class)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, class: usize) -> Result<LossGrad<T>> {
    let k = logits.len();
    if logits.rank() != 1 || k < 2 {
        return Err(Error::dim(format!(
            "softmax needs a vector of at least 2 logits, got {:?}",
            logits.shape()
        )));
    }
    if class >= k {
        return Err(Error::InvalidArgument(format!(
            "class {class} out of range for {k} logits"
        )));
    }
    let z = logits.data();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let shifted: Vec<T> = z.iter().map(|&v| v - max).collect();
    let log_total = shifted.iter().map(|v| v.exp()).sum::<T>().ln();
    // log-sum-exp form keeps the loss finite even when p[class] underflows
    let loss = (log_total - shifted[class]).max(T::zero());
    let p: Vec<T> = shifted.iter().map(|&v| (v - log_total).exp()).collect();
    let grad: Vec<T> = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| if i == class { pi - T::one() } else { pi })
        .collect();
    Ok(LossGrad {
        loss,
        probabilities: Tensor::new(&[k], p)?,
        grad_logits: Tensor::new(&[k], grad)?,
    })
}
