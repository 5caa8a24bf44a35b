//! Volume preprocessing: NIfTI-1 input, Gaussian smoothing in millimetres,
//! axial slicing with background filtering, bilinear resampling and 8-bit
//! quantization.

mod nifti;
mod quantize;
mod resize;
mod slice;
mod smooth;

pub use nifti::{parse_nifti, read_nifti, write_nifti, NiftiDatatype};
pub use quantize::{dequantize, quantize_slice, Quantization};
pub use resize::resize_bilinear;
pub use slice::{extract_slices, DropEnd, Slice2D, SliceOptions, ZERO_MEAN_EPS};
pub use smooth::{gaussian_kernel, gaussian_smooth3d, measure_fwhm, FWHM_PER_SIGMA};

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    /// Normal control.
    Nc = 0,
    /// Alzheimer's disease.
    Ad = 1,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Nc),
            1 => Some(ClassLabel::Ad),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Nc => "NC",
            ClassLabel::Ad => "AD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NC" | "CN" | "0" => Some(ClassLabel::Nc),
            "AD" | "1" => Some(ClassLabel::Ad),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar volume. Voxels are stored as a `[Z, Y, X]` row-major tensor,
/// which is NIfTI's on-disk order (x fastest), so an axial slice is one
/// contiguous `[Y, X]` block.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    voxels: Tensor<f64>,
    voxel_dims_mm: [f64; 3],
    pub subject_id: u32,
    pub label: Option<ClassLabel>,
}

impl Volume3D {
    /// `dims` and `voxel_dims_mm` are in (x, y, z) order; `data` is x-fastest.
    pub fn new(dims: [usize; 3], voxel_dims_mm: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if voxel_dims_mm.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("voxel size {voxel_dims_mm:?} mm")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume voxels".into()));
        }
        let [x, y, z] = dims;
        Ok(Self {
            voxels: Tensor::new(&[z, y, x], data)?,
            voxel_dims_mm,
            subject_id: 0,
            label: None,
        })
    }

    pub fn with_subject(mut self, subject_id: u32, label: Option<ClassLabel>) -> Self {
        self.subject_id = subject_id;
        self.label = label;
        self
    }

    /// (x, y, z) extents.
    pub fn dims(&self) -> [usize; 3] {
        let s = self.voxels.shape();
        [s[2], s[1], s[0]]
    }

    pub fn voxel_dims_mm(&self) -> [f64; 3] {
        self.voxel_dims_mm
    }

    /// Voxels, x fastest.
    pub fn data(&self) -> &[f64] {
        self.voxels.data()
    }

    pub fn tensor(&self) -> &Tensor<f64> {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels.get(&[z, y, x])
    }

    pub fn mean(&self) -> f64 {
        self.data().iter().sum::<f64>() / self.data().len() as f64
    }

    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        Self {
            voxels: Tensor::new(self.voxels.shape(), data).expect("same shape"),
            voxel_dims_mm: self.voxel_dims_mm,
            subject_id: self.subject_id,
            label: self.label,
        }
    }
}
