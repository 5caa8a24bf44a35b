use crate::dataset::{Dataset, Manifest, SliceRecord, SIDE};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::volume::{
    extract_slices, gaussian_smooth3d, quantize_slice, resize_bilinear, DropEnd, Quantization, SliceOptions, Volume3D,
};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PipelineOptions {
    pub slice: SliceOptions,
    pub quantization: Quantization,
}

impl PipelineOptions {
    pub(crate) fn quantization_text(&self) -> String {
        match self.quantization {
            Quantization::PerSlice => "per-slice".into(),
            Quantization::Global { min, max } => format!("global:{min}:{max}"),
        }
    }

    fn record(&self, m: Manifest, variant: u8) -> Manifest {
        m.with_option("variant", variant)
            .with_option("sigma_mm", variant)
            .with_option("drop_last", self.slice.drop_last)
            .with_option(
                "drop_end",
                match self.slice.drop_end {
                    DropEnd::Top => "top",
                    DropEnd::Bottom => "bottom",
                },
            )
            .with_option("zero_mean_eps", self.slice.zero_mean_eps)
            .with_option("filter_order", "drop-then-filter")
            .with_option("resize", "bilinear-half-pixel-28x28")
            .with_option("quantization", self.quantization_text())
            .with_option("split_order", "balance-then-split")
    }
}

/// Smooth (variant > 0, σ = variant mm), slice, resize and quantize one
/// labelled volume.
pub fn preprocess_volume(volume: &Volume3D, variant: u8, options: &PipelineOptions) -> Result<Vec<SliceRecord>> {
    let label = volume
        .label
        .ok_or_else(|| Error::InvalidArgument(format!("subject {} has no class label", volume.subject_id)))?;
    let smoothed;
    let source = if variant > 0 {
        smoothed = gaussian_smooth3d(volume, f64::from(variant))?;
        &smoothed
    } else {
        volume
    };
    extract_slices(source, variant, &options.slice)?
        .iter()
        .map(|s| {
            let small = resize_bilinear(s, SIDE, SIDE)?;
            let px = quantize_slice(&small, options.quantization);
            SliceRecord::new(label, s.subject_id, s.axial_index, variant, &px)
        })
        .collect()
}

/// Records for every volume, in volume order then axial order.
pub fn build_variant_dataset(
    volumes: &[Volume3D],
    variant: u8,
    options: &PipelineOptions,
    config_hash: u64,
    seed: u64,
    exec: Execution,
) -> Result<Dataset> {
    let per_volume = par::try_map_indexed(exec, volumes.len(), |i| {
        preprocess_volume(&volumes[i], variant, options)
    })?;
    let mut manifest = options.record(Manifest::new(config_hash, seed), variant);
    manifest
        .history
        .push(format!("build(volumes={},variant={variant})", volumes.len()));
    Dataset::new(per_volume.into_iter().flatten().collect(), manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_phantoms, PhantomConfig};
    use crate::volume::{ClassLabel, Volume3D};

    #[test]
    fn phantom_dataset_shape() {
        let cfg = PhantomConfig {
            subjects_ad: 2,
            subjects_nc: 1,
            ..PhantomConfig::default()
        };
        let vols = generate_phantoms(&cfg, Execution::Sequential).unwrap();
        let ds = build_variant_dataset(&vols, 3, &PipelineOptions::default(), 7, 1, Execution::Parallel).unwrap();
        // 32 slices, last 10 dropped, smoothing leaves no pure-background slice
        assert_eq!(ds.len(), 3 * 22);
        assert_eq!(ds.class_counts(), [22, 44]);
        assert_eq!(ds.manifest().variant_counts()[&3], 66);
        assert_eq!(ds.manifest().options["filter_order"], "drop-then-filter");
        let seq = build_variant_dataset(&vols, 3, &PipelineOptions::default(), 7, 1, Execution::Sequential).unwrap();
        assert_eq!(seq, ds);
        assert!(ds.records().iter().all(|r| r.variant == 3));
        assert_eq!(ds.records()[0].class(), ClassLabel::Ad);
    }

    #[test]
    fn unsmoothed_variant_drops_background_slices() {
        let cfg = PhantomConfig {
            subjects_ad: 1,
            subjects_nc: 0,
            ..PhantomConfig::default()
        };
        let vol = &generate_phantoms(&cfg, Execution::Sequential).unwrap()[0];
        // the elongated head reaches every axial plane: 32 - 10 dropped
        assert_eq!(
            preprocess_volume(vol, 0, &PipelineOptions::default()).unwrap().len(),
            22
        );

        // blank the three lowest planes, as outside a skull-stripped brain
        let mut data = vol.data().to_vec();
        data[..3 * 32 * 32].fill(0.0);
        let blanked = Volume3D::new(vol.dims(), vol.voxel_dims_mm(), data)
            .unwrap()
            .with_subject(1, vol.label);
        let recs = preprocess_volume(&blanked, 0, &PipelineOptions::default()).unwrap();
        assert_eq!(recs.len(), 19);
        assert_eq!(recs[0].axial_index, 3);
        // smoothing spreads signal into the blank planes, so they survive
        assert_eq!(
            preprocess_volume(&blanked, 3, &PipelineOptions::default())
                .unwrap()
                .len(),
            22
        );
    }

    #[test]
    fn unlabelled_volume_rejected() {
        let v = Volume3D::new([4, 4, 12], [2.0; 3], vec![1.0; 192]).unwrap();
        assert!(matches!(
            preprocess_volume(&v, 0, &PipelineOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
