//! Synthetic subjects standing in for grey-matter volumes.
//!
//! Each phantom is a filled ellipsoidal "head" of baseline intensity with a
//! brighter inner ellipsoid. AD phantoms shrink every inner radius by the
//! effect size, emulating atrophy. Gaussian noise is added inside the head
//! only; the background stays exactly zero, like a skull-stripped image.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;
use crate::volume::{ClassLabel, Volume3D};

pub(crate) const HEAD_INTENSITY: f64 = 0.4;
pub(crate) const INNER_INTENSITY: f64 = 1.0;
/// Head radii as a fraction of each half-extent. The head is elongated
/// axially and clipped by the volume, so every axial slice cuts a sizeable
/// cross-section rather than a thin cap.
pub(crate) const HEAD_RADIUS: [f64; 3] = [0.9, 0.9, 1.2];
/// Control-subject inner radii as a fraction of each half-extent. The axial
/// radius is long enough that, even shrunk for AD, the inner structure cuts
/// every axial plane; relative to the head outline a control slice's inner
/// section is then always wider than an AD slice's.
pub(crate) const INNER_RADIUS: [f64; 3] = [0.5, 0.55, 1.5];

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub subjects_ad: usize,
    pub subjects_nc: usize,
    /// (x, y, z) voxels.
    pub dims: [usize; 3],
    pub voxel_mm: f64,
    /// Fractional reduction of the inner radii for AD subjects.
    pub effect_size: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            subjects_ad: 33,
            subjects_nc: 7,
            dims: [32, 32, 32],
            voxel_mm: 2.0,
            effect_size: 0.3,
            noise_sigma: 0.05,
            seed: 1,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(format!(
                "phantom dims {:?} too small",
                self.dims
            )));
        }
        if !(self.effect_size > 0.0 && self.effect_size < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "effect size {} must lie in (0, 1)",
                self.effect_size
            )));
        }
        if !(self.voxel_mm > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "voxel size and noise must be non-negative".into(),
            ));
        }
        if self.subjects_ad + self.subjects_nc == 0 {
            return Err(Error::InvalidArgument("no subjects requested".into()));
        }
        Ok(())
    }

    pub fn subjects(&self) -> usize {
        self.subjects_ad + self.subjects_nc
    }

    /// Subject ids start at 1; AD subjects come first.
    pub fn label_of(&self, subject_id: u32) -> ClassLabel {
        if (subject_id as usize) <= self.subjects_ad {
            ClassLabel::Ad
        } else {
            ClassLabel::Nc
        }
    }
}

fn inside(p: [f64; 3], centre: [f64; 3], radii: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] - centre[a]) / radii[a]).powi(2)).sum::<f64>() <= 1.0
}

fn phantom(config: &PhantomConfig, subject_id: u32) -> Result<Volume3D> {
    let label = config.label_of(subject_id);
    let [nx, ny, nz] = config.dims;
    let half = config.dims.map(|d| d as f64 / 2.0);
    let centre = config.dims.map(|d| (d as f64 - 1.0) / 2.0);
    let head: [f64; 3] = std::array::from_fn(|a| HEAD_RADIUS[a] * half[a]);
    let shrink = if label == ClassLabel::Ad {
        1.0 - config.effect_size
    } else {
        1.0
    };
    let inner: [f64; 3] = std::array::from_fn(|a| INNER_RADIUS[a] * half[a] * shrink);

    let normal = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut r = rng::seeded(rng::derive(config.seed, rng::stream::PHANTOM, u64::from(subject_id)));
    let mut data = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64, y as f64, z as f64];
                let v = if !inside(p, centre, head) {
                    0.0
                } else {
                    let base = if inside(p, centre, inner) {
                        INNER_INTENSITY
                    } else {
                        HEAD_INTENSITY
                    };
                    if config.noise_sigma > 0.0 {
                        base + normal.sample(&mut r)
                    } else {
                        base
                    }
                };
                data.push(v);
            }
        }
    }
    Ok(Volume3D::new(config.dims, [config.voxel_mm; 3], data)?.with_subject(subject_id, Some(label)))
}

/// Volumes for subjects `1..=subjects_ad + subjects_nc`, fully determined by
/// the config.
pub fn generate_phantoms(config: &PhantomConfig, exec: Execution) -> Result<Vec<Volume3D>> {
    config.validate()?;
    par::try_map_indexed(exec, config.subjects(), |i| phantom(config, i as u32 + 1))
}
