use super::{ClassLabel, Volume3D};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Slices whose mean intensity is at or below this count as background.
pub const ZERO_MEAN_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Slice2D {
    /// `[H, W]` = `[Y, X]` of the source volume.
    pub pixels: Tensor<f64>,
    pub subject_id: u32,
    pub label: Option<ClassLabel>,
    pub axial_index: u16,
    /// Smoothing sigma in mm, 0 for unsmoothed.
    pub variant: u8,
}

impl Slice2D {
    pub fn new(pixels: Tensor<f64>) -> Result<Self> {
        if pixels.rank() != 2 {
            return Err(Error::dim(format!("slice must be [H, W], got {:?}", pixels.shape())));
        }
        Ok(Self {
            pixels,
            subject_id: 0,
            label: None,
            axial_index: 0,
            variant: 0,
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.data().iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub(crate) fn with_pixels(&self, pixels: Tensor<f64>) -> Self {
        Self { pixels, ..self.clone() }
    }
}

/// Which end of the axial stack loses its slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropEnd {
    /// Highest z indices (the default).
    Top,
    Bottom,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceOptions {
    pub drop_last: usize,
    pub drop_end: DropEnd,
    pub zero_mean_eps: f64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            drop_last: 10,
            drop_end: DropEnd::Top,
            zero_mean_eps: ZERO_MEAN_EPS,
        }
    }
}

/// Axial slices in increasing z. The `drop_last` slices at the configured end
/// are removed first, then every remaining slice whose mean is at most
/// `zero_mean_eps`.
pub fn extract_slices(volume: &Volume3D, variant: u8, options: &SliceOptions) -> Result<Vec<Slice2D>> {
    let [nx, ny, nz] = volume.dims();
    if nz <= options.drop_last {
        return Err(Error::Empty(format!(
            "volume has {nz} axial slices, {} are dropped",
            options.drop_last
        )));
    }
    if nz > usize::from(u16::MAX) + 1 {
        return Err(Error::dim(format!("{nz} axial slices exceed the u16 index range")));
    }
    let keep = match options.drop_end {
        DropEnd::Top => 0..nz - options.drop_last,
        DropEnd::Bottom => options.drop_last..nz,
    };
    let plane = nx * ny;
    let mut out = Vec::with_capacity(keep.len());
    for z in keep {
        let px = &volume.data()[z * plane..(z + 1) * plane];
        let mean = px.iter().sum::<f64>() / plane as f64;
        if mean <= options.zero_mean_eps {
            continue;
        }
        out.push(Slice2D {
            pixels: Tensor::new(&[ny, nx], px.to_vec())?,
            subject_id: volume.subject_id,
            label: volume.label,
            axial_index: z as u16,
            variant,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(nz: usize, zero: impl Fn(usize) -> bool) -> Volume3D {
        let (nx, ny) = (3, 2);
        let data = (0..nx * ny * nz)
            .map(|i| if zero(i / (nx * ny)) { 0.0 } else { 1.0 + (i % 5) as f64 })
            .collect();
        Volume3D::new([nx, ny, nz], [2.0; 3], data).unwrap()
    }

    #[test]
    fn drops_last_ten() {
        let s = extract_slices(&stack(30, |_| false), 3, &SliceOptions::default()).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(
            s.iter().map(|s| s.axial_index).collect::<Vec<_>>(),
            (0..20).collect::<Vec<u16>>()
        );
        assert!(s.iter().all(|s| s.variant == 3 && s.pixels.shape() == [2, 3]));
    }

    #[test]
    fn drops_zero_mean_slices() {
        let s = extract_slices(&stack(30, |z| z < 5), 0, &SliceOptions::default()).unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!(s[0].axial_index, 5);
    }

    #[test]
    fn bottom_end_option() {
        let o = SliceOptions {
            drop_end: DropEnd::Bottom,
            ..SliceOptions::default()
        };
        let s = extract_slices(&stack(12, |_| false), 0, &o).unwrap();
        assert_eq!(s.iter().map(|s| s.axial_index).collect::<Vec<_>>(), vec![10, 11]);
    }

    #[test]
    fn too_few_slices() {
        assert!(matches!(
            extract_slices(&stack(10, |_| false), 0, &SliceOptions::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn count_formula_on_patterns() {
        for pattern in 0u32..64 {
            let zero = |z: usize| z < 32 && pattern >> (z % 6) & 1 == 1 && z.is_multiple_of(3);
            let v = stack(24, zero);
            let expected = 24 - 10 - (0..14).filter(|&z| zero(z)).count();
            assert_eq!(extract_slices(&v, 0, &SliceOptions::default()).unwrap().len(), expected);
        }
    }
}
