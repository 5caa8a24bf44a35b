use super::Slice2D;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source coordinate of output sample `i` under half-pixel-centre alignment,
/// clamped to the valid range, as (lower index, upper index, weight of upper).
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resampling with half-pixel-centre sampling.
pub fn resize_bilinear(slice: &Slice2D, out_h: usize, out_w: usize) -> Result<Slice2D> {
    let (h, w) = (slice.height(), slice.width());
    if h < 2 || w < 2 || out_h == 0 || out_w == 0 {
        return Err(Error::dim(format!("cannot resize {h}x{w} to {out_h}x{out_w}")));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(slice.clone());
    }
    let rows = taps(out_h, h);
    let cols = taps(out_w, w);
    let src = slice.pixels.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(slice.with_pixels(Tensor::new(&[out_h, out_w], out)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn slice(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Slice2D {
        Slice2D::new(Tensor::from_fn(&[h, w], |i| f(i / w, i % w))).unwrap()
    }

    #[test]
    fn constant_stays_constant() {
        let r = resize_bilinear(&slice(37, 41, |_, _| 0.625), 28, 28).unwrap();
        assert_eq!(r.pixels.shape(), &[28, 28]);
        assert!(r.pixels.data().iter().all(|&v| (v - 0.625).abs() < 1e-15));
    }

    #[test]
    fn same_size_is_identity() {
        let mut r = rng::seeded(4);
        let s = slice(28, 28, |_, _| r.random_range(0.0..1.0));
        assert_eq!(resize_bilinear(&s, 28, 28).unwrap(), s);
    }

    #[test]
    fn halving_a_ramp_samples_pixel_centres() {
        let s = slice(56, 56, |y, x| 0.3 * x as f64 - 0.7 * y as f64 + 2.0);
        let r = resize_bilinear(&s, 28, 28).unwrap();
        for i in 0..28 {
            for j in 0..28 {
                // output centre (j + 0.5)·2 − 0.5 in input pixel coordinates
                let (sx, sy) = (2.0 * j as f64 + 0.5, 2.0 * i as f64 + 0.5);
                let want = 0.3 * sx - 0.7 * sy + 2.0;
                assert!((r.pixels.get(&[i, j]) - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn output_within_input_range() {
        let mut r = rng::seeded(8);
        let s = slice(32, 32, |_, _| r.random_range(-3.0..7.0));
        let o = resize_bilinear(&s, 28, 28).unwrap();
        let (lo, hi) = s
            .pixels
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(o.pixels.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn round_trip_on_smooth_field() {
        let f = |y: usize, x: usize| {
            let (u, v) = (x as f64 / 32.0, y as f64 / 32.0);
            (std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).cos() + 1.5
        };
        let s = slice(32, 32, f);
        let back = resize_bilinear(&resize_bilinear(&s, 28, 28).unwrap(), 32, 32).unwrap();
        let rms = (s
            .pixels
            .data()
            .iter()
            .zip(back.pixels.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 1024.0)
            .sqrt();
        let norm = (s.pixels.data().iter().map(|a| a * a).sum::<f64>() / 1024.0).sqrt();
        assert!(rms / norm < 0.02, "{}", rms / norm);
    }

    #[test]
    fn degenerate_input() {
        assert!(matches!(
            resize_bilinear(&slice(1, 5, |_, _| 0.0), 28, 28),
            Err(Error::Dimension(_))
        ));
    }
}
