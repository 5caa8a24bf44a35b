use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FcGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let [n_out, n_in] = *weights.shape() else {
        return Err(Error::dim(format!(
            "fc weights must be [N_out, N_in], got {:?}",
            weights.shape()
        )));
    };
    if input.len() != n_in {
        return Err(Error::dim(format!("fc expects {n_in} inputs, got {:?}", input.shape())));
    }
    Ok((n_out, n_in))
}

/// `weights · input + bias`. The input is read flat, whatever its shape.
pub fn fc_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n_out, n_in) = check(input, weights)?;
    bias.expect_shape(&[n_out])?;
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n_in)
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
        .collect();
    Tensor::new(&[n_out], out)
}

/// Dense-layer gradients. `grad_input` takes the shape of `input`.
pub fn fc_backward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, grad_out: &Tensor<T>) -> Result<FcGrads<T>> {
    let (n_out, n_in) = check(input, weights)?;
    grad_out.expect_shape(&[n_out])?;
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); n_in];
    let mut gw = Vec::with_capacity(n_out * n_in);
    for (row, &go) in weights.data().chunks_exact(n_in).zip(g) {
        gw.extend(x.iter().map(|&v| go * v));
        for (d, &w) in gx.iter_mut().zip(row) {
            *d = *d + w * go;
        }
    }
    Ok(FcGrads {
        input: Tensor::new(input.shape(), gx)?,
        weights: Tensor::new(&[n_out, n_in], gw)?,
        bias: grad_out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn identity(n: usize) -> Tensor<f64> {
        Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    #[test]
    fn identity_map() {
        let x = Tensor::new(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        let y = fc_forward(&x, &identity(3), &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
        let g = fc_backward(&x, &identity(3), &y).unwrap();
        assert_eq!(g.input.data(), y.data());
    }

    #[test]
    fn flattened_feature_map_to_hidden() {
        let x = Tensor::<f32>::zeros(&[50, 4, 4]);
        let y = fc_forward(&x, &Tensor::zeros(&[500, 800]), &Tensor::zeros(&[500])).unwrap();
        assert_eq!(y.shape(), &[500]);
        let g = fc_backward(&x, &Tensor::zeros(&[500, 800]), &y).unwrap();
        assert_eq!(g.input.shape(), &[50, 4, 4]);
    }

    #[test]
    fn matches_dot_products() {
        let mut r = rng::seeded(3);
        let x = Tensor::<f64>::from_fn(&[7], |_| r.random_range(-1.0..1.0));
        let w = Tensor::<f64>::from_fn(&[4, 7], |_| r.random_range(-1.0..1.0));
        let b = Tensor::<f64>::from_fn(&[4], |_| r.random_range(-1.0..1.0));
        let y = fc_forward(&x, &w, &b).unwrap();
        for o in 0..4 {
            let mut s = b.get(&[o]);
            for i in 0..7 {
                s += w.get(&[o, i]) * x.get(&[i]);
            }
            assert!((y.get(&[o]) - s).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_gradient_and_mismatch() {
        let x = Tensor::<f64>::filled(&[3], 1.0);
        let w = Tensor::<f64>::filled(&[2, 3], 0.5);
        let g = fc_backward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert!(g
            .input
            .data()
            .iter()
            .chain(g.weights.data())
            .chain(g.bias.data())
            .all(|&v| v == 0.0));
        assert!(matches!(
            fc_forward(&Tensor::zeros(&[4]), &w, &Tensor::zeros(&[2])),
            Err(Error::Dimension(_))
        ));
        assert!(fc_forward(&x, &w, &Tensor::zeros(&[3])).is_err());
    }
}
