//! A directory of NIfTI volumes plus a `volumes.tsv` index naming each
//! file's subject id and class label.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use smri::volume::{read_nifti, write_nifti, ClassLabel, Volume3D};
use smri::{Error, Result};

pub const INDEX_FILE: &str = "volumes.tsv";
const INDEX_HEADER: &str = "file\tsubject_id\tlabel";

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub file: String,
    pub subject_id: u32,
    pub label: ClassLabel,
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(INDEX_HEADER) {
        return Err(Error::Format(format!("volume index must start with {INDEX_HEADER:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let bad = || Error::Format(format!("volume index row {line:?}"));
            let mut f = line.split('\t');
            let (file, id, label) = (
                f.next().ok_or_else(bad)?,
                f.next().ok_or_else(bad)?,
                f.next().ok_or_else(bad)?,
            );
            Ok(IndexEntry {
                file: file.to_string(),
                subject_id: id.trim().parse().map_err(|_| bad())?,
                label: ClassLabel::parse(label.trim()).ok_or_else(bad)?,
            })
        })
        .collect()
}

pub fn index_text(entries: &[IndexEntry]) -> String {
    let mut s = format!("{INDEX_HEADER}\n");
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}", e.file, e.subject_id, e.label);
    }
    s
}

/// Writes every volume as `sub-<id>.nii.gz` and the index beside them.
pub fn write_volumes(dir: &Path, volumes: &[Volume3D]) -> Result<Vec<IndexEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(volumes.len());
    for v in volumes {
        let label = v
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("subject {} has no label", v.subject_id)))?;
        let file = format!("sub-{:04}.nii.gz", v.subject_id);
        write_nifti(v, dir.join(&file))?;
        entries.push(IndexEntry {
            file,
            subject_id: v.subject_id,
            label,
        });
    }
    let index = dir.join(INDEX_FILE);
    fs::write(&index, index_text(&entries)).map_err(|e| Error::io(&index, e))?;
    Ok(entries)
}

/// Reads the volumes listed in `dir/volumes.tsv`, in index order; the index
/// supplies subject and label.
pub fn read_volumes(dir: &Path) -> Result<Vec<Volume3D>> {
    let index = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
    let entries = parse_index(&text)?;
    if entries.is_empty() {
        return Err(Error::Empty(format!("{} lists no volumes", index.display())));
    }
    entries
        .iter()
        .map(|e| Ok(read_nifti(dir.join(&e.file))?.with_subject(e.subject_id, Some(e.label))))
        .collect()
}

/// `.nii` and `.nii.gz` files directly inside `dir`, sorted by name.
pub fn nifti_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            p.is_file() && (name.ends_with(".nii") || name.ends_with(".nii.gz"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads NIfTI files from `dir`, taking subject and label from an index in
/// that directory when present and from each header's description otherwise.
/// Files without a subject id are numbered by their sorted position.
pub fn ingest_dir(dir: &Path) -> Result<Vec<Volume3D>> {
    let index_path = dir.join(INDEX_FILE);
    let index = if index_path.is_file() {
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        Some(parse_index(&text)?)
    } else {
        None
    };
    let files = nifti_files(dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!("no .nii or .nii.gz files in {}", dir.display())));
    }
    files
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let mut vol = read_nifti(path)?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(e) = index.as_ref().and_then(|idx| idx.iter().find(|e| e.file == name)) {
                vol = vol.with_subject(e.subject_id, Some(e.label));
            }
            if vol.subject_id == 0 {
                vol.subject_id = i as u32 + 1;
            }
            if vol.label.is_none() {
                return Err(Error::Format(format!(
                    "{}: no class label in the header description or {INDEX_FILE}",
                    path.display()
                )));
            }
            Ok(vol)
        })
        .collect()
}
