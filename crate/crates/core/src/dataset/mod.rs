//! Labelled 28×28 slice datasets: records, manifest, seeded split/balance and
//! batch iteration. The on-disk format lives in [`store`].

mod manifest;
mod store;

pub use manifest::Manifest;
pub use store::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION, RECORD_SIZE};

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::volume::ClassLabel;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
/// Byte-to-float scale applied when batching (1/256).
pub const PIXEL_SCALE: f32 = 0.003_906_25;
pub const VARIANTS: [u8; 4] = [0, 2, 3, 4];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SliceRecord {
    /// 0 = NC, 1 = AD.
    pub label: u8,
    pub subject_id: u32,
    pub axial_index: u16,
    pub variant: u8,
    pub pixels: [u8; PIXELS],
}

impl SliceRecord {
    pub fn new(label: ClassLabel, subject_id: u32, axial_index: u16, variant: u8, pixels: &[u8]) -> Result<Self> {
        let pixels: [u8; PIXELS] = pixels
            .try_into()
            .map_err(|_| Error::dim(format!("record needs {PIXELS} pixels, got {}", pixels.len())))?;
        let r = Self {
            label: label.index() as u8,
            subject_id,
            axial_index,
            variant,
            pixels,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn class(&self) -> ClassLabel {
        ClassLabel::from_index(self.label.into()).expect("validated label")
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Format(format!("label {}", self.label)));
        }
        if !VARIANTS.contains(&self.variant) {
            return Err(Error::Format(format!("variant {}", self.variant)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Individual slices are shuffled; a subject may land on both sides.
    #[default]
    Slice,
    /// Whole subjects are shuffled, so no subject crosses the split.
    Subject,
}

/// Ordered records plus a manifest whose counts always match them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<SliceRecord>,
    manifest: Manifest,
}

impl Dataset {
    /// The manifest's counts are recomputed from `records`; everything else
    /// is kept.
    pub fn new(records: Vec<SliceRecord>, mut manifest: Manifest) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        manifest.recount(&records);
        Ok(Self { records, manifest })
    }

    pub fn records(&self) -> &[SliceRecord] {
        &self.records
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> [u64; 2] {
        [self.manifest.count(ClassLabel::Nc), self.manifest.count(ClassLabel::Ad)]
    }

    fn derived(&self, records: Vec<SliceRecord>, step: String) -> Self {
        let mut manifest = self.manifest.clone();
        manifest.history.push(step);
        manifest.recount(&records);
        Self { records, manifest }
    }
}

/// Seeded shuffle, then the first ⌊n·test_fraction⌋ go to test and the rest
/// to train (subject mode applies the same rule to subject ids).
pub fn split_dataset(dataset: &Dataset, test_fraction: f64, seed: u64, mode: SplitMode) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction}")));
    }
    let mut r = rng::seeded(rng::derive(seed, rng::stream::SPLIT, 0));
    let (train, test): (Vec<SliceRecord>, Vec<SliceRecord>) = match mode {
        SplitMode::Slice => {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut r);
            let n_test = (dataset.len() as f64 * test_fraction).floor() as usize;
            let pick = |ix: &[usize]| ix.iter().map(|&i| dataset.records[i].clone()).collect();
            (pick(&order[n_test..]), pick(&order[..n_test]))
        }
        SplitMode::Subject => {
            let mut subjects: Vec<u32> = dataset
                .records
                .iter()
                .map(|r| r.subject_id)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            subjects.shuffle(&mut r);
            let n_test = (subjects.len() as f64 * test_fraction).floor() as usize;
            let test_ids: BTreeSet<u32> = subjects[..n_test].iter().copied().collect();
            dataset
                .records
                .iter()
                .cloned()
                .partition(|r| !test_ids.contains(&r.subject_id))
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty(format!(
            "split of {} records at {test_fraction} leaves {} train / {} test",
            dataset.len(),
            train.len(),
            test.len()
        )));
    }
    let tag = |side: &str| {
        let mode = match mode {
            SplitMode::Slice => "slice",
            SplitMode::Subject => "subject",
        };
        format!("split(side={side},test_fraction={test_fraction},seed={seed},mode={mode})")
    };
    Ok((dataset.derived(train, tag("train")), dataset.derived(test, tag("test"))))
}

/// Down-samples the majority class to `majority_target` records, uniformly
/// without replacement; the minority class and record order are kept.
/// Must run before any split.
pub fn balance_dataset(dataset: &Dataset, majority_target: u64, seed: u64) -> Result<Dataset> {
    if dataset.manifest.history.iter().any(|h| h.starts_with("split")) {
        return Err(Error::Order("balancing must happen before the train/test split".into()));
    }
    let [nc, ad] = dataset.class_counts();
    let majority = if ad >= nc { ClassLabel::Ad } else { ClassLabel::Nc };
    let have = nc.max(ad);
    if majority_target > have {
        return Err(Error::InvalidArgument(format!(
            "target {majority_target} exceeds the {have} {majority} records available"
        )));
    }
    let members: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.records[i].class() == majority)
        .collect();
    let mut r = rng::seeded(rng::derive(seed, rng::stream::BALANCE, 0));
    let mut keep_majority: Vec<usize> = index::sample(&mut r, members.len(), majority_target as usize)
        .into_iter()
        .map(|k| members[k])
        .collect();
    keep_majority.sort_unstable();
    let keep: BTreeSet<usize> = keep_majority.into_iter().collect();
    let records = dataset
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.class() != majority || keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    Ok(dataset.derived(
        records,
        format!("balance(majority={majority},target={majority_target},seed={seed})"),
    ))
}

/// One mini-batch: pixels as `[B, 1, 28, 28]` floats scaled by 1/256.
#[derive(Clone, Debug)]
pub struct Batch {
    pub pixels: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Positions of the batch's records in the dataset.
    pub indices: Vec<usize>,
}

pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(make_batch(self.dataset, indices))
    }
}

pub(crate) fn make_batch(dataset: &Dataset, indices: Vec<usize>) -> Batch {
    let mut data = Vec::with_capacity(indices.len() * PIXELS);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in &indices {
        let r = &dataset.records[i];
        data.extend(r.pixels.iter().map(|&p| f32::from(p) * PIXEL_SCALE));
        labels.push(usize::from(r.label));
    }
    Batch {
        pixels: Tensor::new(&[indices.len(), 1, SIDE, SIDE], data).expect("batch shape"),
        labels,
        indices,
    }
}

/// Shuffled mini-batches for one epoch. The last batch may be short.
pub fn batch_iter(dataset: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::seeded(rng::derive(epoch_seed, rng::stream::EPOCH, 0)));
    Ok(BatchIter {
        dataset,
        order,
        pos: 0,
        batch_size,
    })
}
