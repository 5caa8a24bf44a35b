use super::Slice2D;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Quantization {
    /// Each slice's own [min, max] maps to [0, 255].
    #[default]
    PerSlice,
    /// A fixed [min, max] for every slice; values outside are clamped.
    Global { min: f64, max: f64 },
}

/// Affine map to [0, 255] rounded half up. A zero-width range maps to 0.
pub fn quantize_slice(slice: &Slice2D, mode: Quantization) -> Vec<u8> {
    let px = slice.pixels.data();
    let (lo, hi) = match mode {
        Quantization::PerSlice => px
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        Quantization::Global { min, max } => (min, max),
    };
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0; px.len()];
    }
    px.iter()
        .map(|&v| ((v - lo) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Inverse affine map for a known range.
pub fn dequantize(q: u8, min: f64, max: f64) -> f64 {
    min + f64::from(q) / 255.0 * (max - min)
}
