use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::SliceRecord;
use crate::error::{Error, Result};
use crate::volume::ClassLabel;

/// Dataset description stored alongside the records as `key=value` lines.
///
/// Class and variant counts are derived from the records and cannot be set
/// directly; `history` lists the operations applied in order and `options`
/// records the pipeline configuration that produced the data.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    counts: [u64; 2],
    variant_counts: BTreeMap<u8, u64>,
    pub source_config_hash: u64,
    pub creation_seed: u64,
    pub history: Vec<String>,
    pub options: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(source_config_hash: u64, creation_seed: u64) -> Self {
        Self {
            source_config_hash,
            creation_seed,
            ..Self::default()
        }
    }

    pub fn with_option(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.to_string(), value.to_string());
        self
    }

    pub fn count(&self, class: ClassLabel) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn variant_counts(&self) -> &BTreeMap<u8, u64> {
        &self.variant_counts
    }

    /// AD : NC record ratio.
    pub fn imbalance_ratio(&self) -> f64 {
        self.count(ClassLabel::Ad) as f64 / self.count(ClassLabel::Nc) as f64
    }

    pub(crate) fn recount(&mut self, records: &[SliceRecord]) {
        self.counts = [0, 0];
        self.variant_counts.clear();
        for r in records {
            self.counts[usize::from(r.label)] += 1;
            *self.variant_counts.entry(r.variant).or_default() += 1;
        }
    }

    /// Test hook for manifest arithmetic on corpus-sized counts that are not
    /// backed by records.
    pub fn with_counts(mut self, nc: u64, ad: u64) -> Self {
        self.counts = [nc, ad];
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count.nc={}", self.counts[0]);
        let _ = writeln!(s, "count.ad={}", self.counts[1]);
        for (v, n) in &self.variant_counts {
            let _ = writeln!(s, "count.variant.{v}={n}");
        }
        let _ = writeln!(s, "source_config_hash={:016x}", self.source_config_hash);
        let _ = writeln!(s, "creation_seed={}", self.creation_seed);
        let _ = writeln!(s, "history={}", self.history.join(";"));
        for (k, v) in &self.options {
            let _ = writeln!(s, "option.{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {line:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| Error::Format(format!("manifest {k}={v}")));
            match k {
                "count.nc" => m.counts[0] = num(v)?,
                "count.ad" => m.counts[1] = num(v)?,
                "source_config_hash" => {
                    m.source_config_hash =
                        u64::from_str_radix(v, 16).map_err(|_| Error::Format(format!("manifest {k}={v}")))?
                }
                "creation_seed" => m.creation_seed = num(v)?,
                "history" => m.history = v.split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
                _ => {
                    if let Some(variant) = k.strip_prefix("count.variant.") {
                        let variant = variant
                            .parse()
                            .map_err(|_| Error::Format(format!("manifest key {k}")))?;
                        m.variant_counts.insert(variant, num(v)?);
                    } else if let Some(opt) = k.strip_prefix("option.") {
                        m.options.insert(opt.to_string(), v.to_string());
                    } else {
                        return Err(Error::Format(format!("unknown manifest key {k}")));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Checks the stored counts against the records they describe.
    pub(crate) fn verify_counts(&self, records: &[SliceRecord]) -> Result<()> {
        let mut actual = self.clone();
        actual.recount(records);
        if actual.counts != self.counts || actual.variant_counts != self.variant_counts {
            return Err(Error::Format(format!(
                "manifest counts {:?}/{:?} disagree with records {:?}/{:?}",
                self.counts, self.variant_counts, actual.counts, actual.variant_counts
            )));
        }
        Ok(())
    }
}
