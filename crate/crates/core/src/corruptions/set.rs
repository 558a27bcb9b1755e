use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_with_identity, CorruptionKind, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::imageio::{list_images, read_image, relative_id, write_image};
use crate::numerics::{derive_seed, fnv1a64, Tensor};

pub const MANIFEST_HEADER: &str = "source_id,kind,severity,seed,path";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub source_id: String,
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub path: String,
}

/// Per-image corruption seed. Severity is deliberately excluded so all five
/// levels of one image share their random draws.
pub fn image_seed(base: u64, source_id: &str, kind: CorruptionKind) -> u64 {
    derive_seed(base, &[fnv1a64(source_id.as_bytes()), kind.index() as u64])
}

fn output_rel(kind: CorruptionKind, severity: u8, source_id: &str) -> String {
    let stem = match source_id.rfind('.') {
        Some(dot) if !source_id[dot..].contains('/') => &source_id[..dot],
        _ => source_id,
    };
    format!("{}/{}/{}.png", kind.name(), severity, stem)
}

/// Corrupt every image below `dataset` with every `(kind, severity)` pair and
/// write `<kind>/<severity>/<relative path>.png` plus `manifest.csv` under
/// `output`. Severity 0 writes an unmodified copy. Rows are sorted by source,
/// kind, then severity.
pub fn build_corrupted_set(
    dataset: &Path,
    output: &Path,
    kinds: &[CorruptionKind],
    severities: &[u8],
    seed: u64,
) -> Result<Vec<ManifestRow>> {
    if kinds.is_empty() || severities.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(bad) = severities.iter().find(|s| **s > 5) {
        return Err(Error::InvalidArgument(format!("severity must be in 0..=5, got {bad}")));
    }
    let paths = list_images(dataset)?;
    if paths.is_empty() {
        return Err(Error::Dataset(vec![format!(
            "{}: no images found",
            dataset.display()
        )]));
    }
    let loaded: Vec<Result<Tensor>> = paths.par_iter().map(|p| read_image(p)).collect();
    let mut problems = Vec::new();
    let mut images = Vec::with_capacity(paths.len());
    for (p, r) in paths.iter().zip(loaded) {
        match r {
            Ok(t) if t.shape() == [3, IMAGE_SIZE, IMAGE_SIZE] => images.push(t),
            Ok(t) => problems.push(format!(
                "{}: expected {IMAGE_SIZE}x{IMAGE_SIZE} RGB, got {}x{}",
                p.display(),
                t.shape()[2],
                t.shape()[1]
            )),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(problems));
    }
    let ids: Vec<String> = paths.iter().map(|p| relative_id(dataset, p)).collect();
    let tasks: Vec<(usize, CorruptionKind, u8)> = (0..ids.len())
        .flat_map(|i| {
            kinds
                .iter()
                .flat_map(move |&k| severities.iter().map(move |&s| (i, k, s)))
        })
        .collect();
    let mut rows: Vec<ManifestRow> = tasks
        .par_iter()
        .map(|&(i, kind, severity)| {
            let seed = image_seed(seed, &ids[i], kind);
            let out = apply_with_identity(&images[i], kind, severity, seed)?;
            let rel = output_rel(kind, severity, &ids[i]);
            write_image(&output.join(&rel), &out)?;
            Ok(ManifestRow {
                source_id: ids[i].clone(),
                kind,
                severity,
                seed,
                path: rel,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        (&a.source_id, a.kind, a.severity).cmp(&(&b.source_id, b.kind, b.severity))
    });
    write_manifest(&output.join("manifest.csv"), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != MANIFEST_HEADER {
        return Err(Error::format(
            path,
            format!("manifest header `{header}`, expected `{MANIFEST_HEADER}`"),
        ));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Resolve a manifest row's image path.
pub fn manifest_image_path(manifest: &Path, row: &ManifestRow) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(&row.path)
}

/// Corrupt in-memory images; image `i` uses source id `"{i}"` for its seed.
pub fn corrupt_in_memory(images: &[Tensor], kind: CorruptionKind, severity: u8, seed: u64) -> Result<Vec<Tensor>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| apply_with_identity(img, kind, severity, image_seed(seed, &i.to_string(), kind)))
        .collect()
}
