//! Flat dataset file, little-endian:
//!
//! ```text
//! "SMRD" | version u16 | record count u64 | manifest length u32 | manifest bytes
//! records × 792: label u8 | subject u32 | axial index u16 | variant u8 | 784 pixels
//! FNV-1a 64 of everything above, u64
//! ```

use std::fs;
use std::path::Path;

use super::{Dataset, Manifest, SliceRecord, PIXELS};
use crate::error::{Error, Result};
use crate::fnv1a64;

pub const DATASET_MAGIC: &[u8; 4] = b"SMRD";
pub const DATASET_VERSION: u16 = 1;
pub const RECORD_SIZE: usize = 1 + 4 + 2 + 1 + PIXELS;
const FIXED_HEADER: usize = 4 + 2 + 8 + 4;

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest.to_text();
        let mut out = Vec::with_capacity(FIXED_HEADER + manifest.len() + self.len() * RECORD_SIZE + 8);
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for r in &self.records {
            out.push(r.label);
            out.extend_from_slice(&r.subject_id.to_le_bytes());
            out.extend_from_slice(&r.axial_index.to_le_bytes());
            out.push(r.variant);
            out.extend_from_slice(&r.pixels);
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 4 {
            return Err(Error::Truncated(format!("{} bytes", b.len())));
        }
        if &b[..4] != DATASET_MAGIC {
            return Err(Error::BadMagic {
                expected: DATASET_MAGIC.to_vec(),
                found: b[..4].to_vec(),
            });
        }
        if b.len() < FIXED_HEADER {
            return Err(Error::Truncated(format!(
                "{} bytes, header needs {FIXED_HEADER}",
                b.len()
            )));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != DATASET_VERSION {
            return Err(Error::Version {
                expected: DATASET_VERSION,
                found: version,
            });
        }
        let count = u64::from_le_bytes(b[6..14].try_into().expect("8 bytes"));
        let mlen = u32::from_le_bytes(b[14..18].try_into().expect("4 bytes")) as usize;
        let expected = (count as u128) * RECORD_SIZE as u128 + (FIXED_HEADER + mlen + 8) as u128;
        if (b.len() as u128) < expected {
            return Err(Error::Truncated(format!(
                "{count} records need {expected} bytes, file has {}",
                b.len()
            )));
        }
        if (b.len() as u128) > expected {
            return Err(Error::Format(format!(
                "{} bytes beyond the {count} declared records",
                b.len() as u128 - expected
            )));
        }
        let body = b.len() - 8;
        let stored = u64::from_le_bytes(b[body..].try_into().expect("8 bytes"));
        let computed = fnv1a64(&b[..body]);
        if stored != computed {
            return Err(Error::Corrupt { stored, computed });
        }

        let text = std::str::from_utf8(&b[FIXED_HEADER..FIXED_HEADER + mlen])
            .map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        let manifest = Manifest::parse(text)?;
        let records = b[FIXED_HEADER + mlen..body]
            .chunks_exact(RECORD_SIZE)
            .map(|c| {
                let r = SliceRecord {
                    label: c[0],
                    subject_id: u32::from_le_bytes(c[1..5].try_into().expect("4 bytes")),
                    axial_index: u16::from_le_bytes([c[5], c[6]]),
                    variant: c[7],
                    pixels: c[8..].try_into().expect("784 bytes"),
                };
                r.validate().map(|_| r)
            })
            .collect::<Result<Vec<_>>>()?;
        manifest.verify_counts(&records)?;
        Ok(Self { records, manifest })
    }
}

/// Refuses to write an empty dataset.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if dataset.is_empty() {
        return Err(Error::Empty(format!("refusing to write {}", path.display())));
    }
    fs::write(path, dataset.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::super::tests::fixture;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn record_size_is_792() {
        assert_eq!(RECORD_SIZE, 792);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.smrd");
        let mut ds = fixture(5, 9);
        ds.manifest.options.insert("drop_last".into(), "10".into());
        write_dataset(&ds, &p).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(fs::read(&p).unwrap(), back.to_bytes());
    }

    #[test]
    fn rejections() {
        let good = fixture(2, 3).to_bytes();
        assert!(matches!(
            Dataset::from_bytes(&good[..good.len() - 1]),
            Err(Error::Truncated(_))
        ));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 20] ^= 1;
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Corrupt { .. })));
        let mut bad = good.clone();
        bad[6] += 1;
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Truncated(_))));
        assert!(write_dataset(&Dataset::new(vec![], Manifest::default()).unwrap(), "/nonexistent/x").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bytes_round_trip(nc in 0usize..6, ad in 1usize..6, seed in any::<u64>(), opt in "[a-z]{1,8}") {
            let mut ds = fixture(nc, ad);
            ds.manifest.creation_seed = seed;
            ds.manifest.options.insert(opt.clone(), opt);
            let bytes = ds.to_bytes();
            let back = Dataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, ds);
        }
    }
}
