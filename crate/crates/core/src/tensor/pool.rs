use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Winning input offset for each output cell of a 2×2 max-pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxMap {
    input_shape: [usize; 3],
    winners: Vec<usize>,
}

impl ArgmaxMap {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let [c, h, w] = self.input_shape;
        [c, h / 2, w / 2]
    }

    /// Flat input offsets, one per output cell in row-major order.
    pub fn winners(&self) -> &[usize] {
        &self.winners
    }
}

/// Max over disjoint 2×2 windows. Ties go to the first element in row-major
/// window order.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, ArgmaxMap)> {
    let (c, h, w) = input.dims3("maxpool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!("maxpool 2x2 needs even H and W, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * w + 2 * j;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                out.push(x[best]);
                winners.push(best);
            }
        }
    }
    Ok((
        Tensor::new(&[c, oh, ow], out)?,
        ArgmaxMap {
            input_shape: [c, h, w],
            winners,
        },
    ))
}

/// Routes each output gradient to the recorded winner of its window.
pub fn maxpool2x2_backward<T: Scalar>(argmax: &ArgmaxMap, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(&argmax.output_shape())?;
    if argmax.winners.len() != grad_out.len() {
        return Err(Error::dim("argmax map does not match gradient"));
    }
    let mut gx = Tensor::zeros(&argmax.input_shape);
    let dst = gx.data_mut();
    for (&idx, &g) in argmax.winners.iter().zip(grad_out.data()) {
        dst[idx] = dst[idx] + g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn first_layer_shape() {
        let (y, map) = maxpool2x2_forward(&Tensor::<f32>::zeros(&[20, 24, 24])).unwrap();
        assert_eq!(y.shape(), &[20, 12, 12]);
        assert_eq!(map.output_shape(), [20, 12, 12]);
    }

    #[test]
    fn constant_field() {
        let (y, map) = maxpool2x2_forward(&Tensor::<f64>::filled(&[2, 4, 6], 3.5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.5));
        // ties resolve to the top-left cell
        assert_eq!(map.winners()[0], 0);
        assert_eq!(map.winners()[1], 2);
    }

    #[test]
    fn matches_window_scan() {
        let mut r = rng::seeded(5);
        let x = Tensor::<f64>::from_fn(&[3, 8, 8], |_| r.random_range(-1.0..1.0));
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        for c in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..2 {
                        for b in 0..2 {
                            m = m.max(x.get(&[c, 2 * i + a, 2 * j + b]));
                        }
                    }
                    assert_eq!(y.get(&[c, i, j]), m);
                }
            }
        }
    }

    #[test]
    fn odd_sizes_rejected() {
        assert!(matches!(
            maxpool2x2_forward(&Tensor::<f32>::zeros(&[1, 5, 4])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn routing_puts_one_per_window() {
        let mut r = rng::seeded(9);
        let x = Tensor::<f64>::from_fn(&[2, 6, 4], |_| r.random_range(-1.0..1.0));
        let (y, map) = maxpool2x2_forward(&x).unwrap();
        let g = maxpool2x2_backward(&map, &Tensor::filled(y.shape(), 1.0)).unwrap();
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..2 {
                    let ones: f64 = (0..4).map(|k| g.get(&[c, 2 * i + k / 2, 2 * j + k % 2])).sum();
                    assert_eq!(ones, 1.0);
                }
            }
        }
        let z = maxpool2x2_backward(&map, &Tensor::<f64>::zeros(y.shape())).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_map_rejected() {
        let (_, map) = maxpool2x2_forward(&Tensor::<f32>::zeros(&[1, 4, 4])).unwrap();
        assert!(matches!(
            maxpool2x2_backward(&map, &Tensor::<f32>::zeros(&[1, 3, 3])),
            Err(Error::Dimension(_))
        ));
    }
}
