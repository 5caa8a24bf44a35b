//! NIfTI-1 single-file (`n+1`) reader and a float32 writer.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{ClassLabel, Volume3D};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDatatype {
    U8,
    I16,
    F32,
    F64,
}

impl NiftiDatatype {
    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Self::U8,
            4 => Self::I16,
            16 => Self::F32,
            64 => Self::F64,
            c => return Err(Error::Unsupported(format!("NIfTI datatype code {c}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::I16 => 2,
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Clone, Copy)]
struct Endian {
    little: bool,
}

impl Endian {
    fn i16(self, b: &[u8], at: usize) -> i16 {
        let raw = [b[at], b[at + 1]];
        if self.little {
            i16::from_le_bytes(raw)
        } else {
            i16::from_be_bytes(raw)
        }
    }

    fn f32(self, b: &[u8], at: usize) -> f32 {
        let raw: [u8; 4] = b[at..at + 4].try_into().expect("4 bytes");
        if self.little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        }
    }

    fn f64(self, b: &[u8], at: usize) -> f64 {
        let raw: [u8; 8] = b[at..at + 8].try_into().expect("8 bytes");
        if self.little {
            f64::from_le_bytes(raw)
        } else {
            f64::from_be_bytes(raw)
        }
    }
}

/// Parses a `.nii` byte stream, gunzipping first when it carries the gzip
/// magic. Subject id and label are taken from a `subject=<id> label=<AD|NC>`
/// description when present.
pub fn parse_nifti(bytes: &[u8]) -> Result<Volume3D> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        return parse_raw(&raw);
    }
    parse_raw(bytes)
}

fn parse_raw(b: &[u8]) -> Result<Volume3D> {
    if b.len() < HEADER_SIZE {
        return Err(Error::Truncated(format!(
            "{} bytes, header needs {HEADER_SIZE}",
            b.len()
        )));
    }
    if &b[344..348] != MAGIC {
        return Err(Error::Format(format!("NIfTI magic {:?}", &b[344..348])));
    }
    let le = Endian { little: true };
    let e = if (1..=7).contains(&le.i16(b, 40)) {
        le
    } else {
        let be = Endian { little: false };
        if !(1..=7).contains(&be.i16(b, 40)) {
            return Err(Error::Format("dim[0] out of range in either byte order".into()));
        }
        be
    };

    let dim: Vec<i64> = (0..8).map(|i| i64::from(e.i16(b, 40 + 2 * i))).collect();
    let ndim = dim[0];
    if !(ndim == 3 || (ndim == 4 && dim[4] == 1)) {
        return Err(Error::Unsupported(format!(
            "{ndim}-D image with dims {:?}",
            &dim[1..=ndim as usize]
        )));
    }
    if dim[1..=3].iter().any(|&d| d < 1) {
        return Err(Error::Format(format!("non-positive extent {:?}", &dim[1..=3])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];
    let dtype = NiftiDatatype::from_code(e.i16(b, 70))?;
    let pixdim = [e.f32(b, 80), e.f32(b, 84), e.f32(b, 88)].map(f64::from);
    let vox_offset = e.f32(b, 108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Format(format!("vox_offset {vox_offset}")));
    }
    let slope = e.f32(b, 112);
    let inter = e.f32(b, 116);

    let n: usize = dims.iter().product();
    let start = vox_offset as usize;
    let need = start + n * dtype.size();
    if b.len() < need {
        return Err(Error::Truncated(format!(
            "image data needs {need} bytes, file has {}",
            b.len()
        )));
    }
    let raw = &b[start..need];
    let mut data: Vec<f64> = match dtype {
        NiftiDatatype::U8 => raw.iter().map(|&v| f64::from(v)).collect(),
        NiftiDatatype::I16 => (0..n).map(|i| f64::from(e.i16(raw, 2 * i))).collect(),
        NiftiDatatype::F32 => (0..n).map(|i| f64::from(e.f32(raw, 4 * i))).collect(),
        NiftiDatatype::F64 => (0..n).map(|i| e.f64(raw, 8 * i)).collect(),
    };
    if slope != 0.0 && slope.is_finite() && inter.is_finite() {
        let (s, k) = (f64::from(slope), f64::from(inter));
        data.iter_mut().for_each(|v| *v = *v * s + k);
    }
    if pixdim.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Format(format!("voxel size {pixdim:?}")));
    }

    let mut vol = Volume3D::new(dims, pixdim, data)?;
    let descrip = &b[148..228];
    let text = String::from_utf8_lossy(descrip.split(|&c| c == 0).next().unwrap_or_default()).into_owned();
    for tok in text.split_whitespace() {
        if let Some(id) = tok.strip_prefix("subject=").and_then(|v| v.parse().ok()) {
            vol.subject_id = id;
        } else if let Some(l) = tok.strip_prefix("label=").and_then(ClassLabel::parse) {
            vol.label = Some(l);
        }
    }
    Ok(vol)
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_nifti(&bytes)
}

/// Encodes a little-endian float32 `n+1` image with 2 mm-style pixdims and
/// the subject/label description.
pub fn encode_nifti(volume: &Volume3D) -> Vec<u8> {
    let mut h = vec![0u8; DATA_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let [x, y, z] = volume.dims();
    for (i, d) in [3, x, y, z, 1, 1, 1, 1].into_iter().enumerate() {
        put_i16(&mut h, 40 + 2 * i, d as i16);
    }
    put_i16(&mut h, 70, 16);
    put_i16(&mut h, 72, 32);
    put_f32(&mut h, 76, 1.0);
    for (i, d) in volume.voxel_dims_mm().into_iter().enumerate() {
        put_f32(&mut h, 80 + 4 * i, d as f32);
    }
    put_f32(&mut h, 108, DATA_OFFSET as f32);
    h[123] = 2; // xyzt_units: millimetres
    let mut descrip = format!("subject={}", volume.subject_id);
    if let Some(l) = volume.label {
        descrip.push_str(&format!(" label={l}"));
    }
    h[148..148 + descrip.len()].copy_from_slice(descrip.as_bytes());
    h[344..348].copy_from_slice(MAGIC);
    h.reserve(volume.data().len() * 4);
    for &v in volume.data() {
        h.extend_from_slice(&(v as f32).to_le_bytes());
    }
    h
}

/// Writes float32 NIfTI; gzip-compressed when the path ends in `.gz`.
pub fn write_nifti(volume: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume);
    let out = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes)
            .and_then(|_| enc.finish())
            .map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
