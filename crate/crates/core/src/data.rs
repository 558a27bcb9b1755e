//! Labelled image sets: procedural synthesis, folder/manifest ingestion and
//! corrupted-set discovery.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruptions::ops::plasma_fractal;
use crate::corruptions::{read_manifest, CorruptionKind, IMAGE_SIZE};
use crate::error::{ensure, Error, Result};
use crate::imageio::{list_images, read_image, relative_id, write_image};
use crate::numerics::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Images `[3, 64, 64]` in [0, 1] with class labels and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub class_names: Vec<String>,
    /// Stable per-image identifier (relative path for loaded data).
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            splits: indices.iter().map(|&i| self.splits[i]).collect(),
            class_names: self.class_names.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    pub fn split(&self, split: Split) -> Dataset {
        self.subset(&self.indices(split))
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes()];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Write `<root>/<split>/<class>/<id>.png`.
    pub fn save(&self, root: &Path) -> Result<()> {
        (0..self.len()).into_par_iter().try_for_each(|i| {
            let path = root
                .join(self.splits[i].name())
                .join(&self.class_names[self.labels[i]])
                .join(format!("{}.png", self.ids[i]));
            write_image(&path, &self.images[i])
        })
    }
}

const SHAPES: [&str; 5] = ["disk", "bar", "triangle", "cross", "ring"];
/// Stripe periods in pixels, coarse then fine.
const PERIODS: [f64; 4] = [16.0, 6.0, 10.0, 4.0];

fn inside(shape: usize, u: f64, v: f64, r: f64) -> bool {
    match shape {
        0 => u * u + v * v <= r * r,
        1 => u.abs() <= 1.1 * r && v.abs() <= 0.25 * r,
        2 => [PI * 1.5, PI / 6.0, PI * 5.0 / 6.0]
            .iter()
            .all(|a| u * a.cos() + v * a.sin() <= 0.55 * r),
        3 => (u.abs() <= 0.25 * r && v.abs() <= r) || (v.abs() <= 0.25 * r && u.abs() <= r),
        _ => {
            let d = u.hypot(v);
            (0.55 * r..=r).contains(&d)
        }
    }
}

fn synth_image(shape: usize, period: f64, rng: &mut RngStream) -> Tensor {
    let n = IMAGE_SIZE;
    let plane = n * n;
    // object and background sit on opposite sides of mid-grey
    let light_object = rng.bernoulli(0.5);
    let (lo, hi) = if light_object { ((0.6, 0.85), (0.1, 0.35)) } else { ((0.15, 0.4), (0.65, 0.9)) };
    let fg_level = rng.uniform(lo.0, lo.1);
    let bg_level = rng.uniform(hi.0, hi.1);
    let tint = |rng: &mut RngStream, level: f64| [0; 3].map(|_| (level + rng.uniform(-0.1, 0.1)).clamp(0.0, 1.0));
    let fg = tint(rng, fg_level);
    let bg = tint(rng, bg_level);
    let cy = n as f64 / 2.0 + rng.uniform(-6.0, 6.0);
    let cx = n as f64 / 2.0 + rng.uniform(-6.0, 6.0);
    let r = 18.0 * rng.uniform(0.85, 1.15);
    let rot = rng.uniform(0.0, TAU);
    let stripe_angle = rng.uniform(0.0, PI);
    let stripe_phase = rng.uniform(0.0, TAU);
    let haze = plasma_fractal(n, 2.0, rng);
    let (rs, rc) = rot.sin_cos();
    let (ss, sc) = stripe_angle.sin_cos();
    let mut data = vec![0.0; 3 * plane];
    for row in 0..n {
        for col in 0..n {
            let i = row * n + col;
            let mut acc = [0.0; 3];
            // 2 × 2 supersampling
            for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let y = row as f64 + oy - cy;
                let x = col as f64 + ox - cx;
                let (u, v) = (rc * x + rs * y, -rs * x + rc * y);
                let colour = if inside(shape, u, v, r) {
                    let s = (TAU * (u * sc + v * ss) / period + stripe_phase).cos();
                    let d = if s >= 0.0 { 0.2 } else { -0.2 };
                    fg.map(|c| (c + d).clamp(0.0, 1.0))
                } else {
                    let d = 0.1 * (haze[i] - 0.5);
                    bg.map(|c| (c + d).clamp(0.0, 1.0))
                };
                for ch in 0..3 {
                    acc[ch] += colour[ch] / 4.0;
                }
            }
            for ch in 0..3 {
                data[ch * plane + i] = acc[ch];
            }
        }
    }
    Tensor::new(&[3, n, n], data).expect("consistent shape")
}

/// Procedural stand-in for a natural-image set. Class `c` is shape `c % 5`
/// filled with stripes of period `PERIODS[c / 5]`; position, size, rotation,
/// stripe orientation/phase, colours and background vary per image. The
/// first 80% of each class is tagged train, the rest val.
pub fn synth_dataset(n_classes: usize, n_per_class: usize, seed: u64) -> Result<Dataset> {
    ensure!(n_classes >= 2, InvalidArgument, "need at least 2 classes, got {n_classes}");
    ensure!(
        n_classes <= SHAPES.len() * PERIODS.len(),
        InvalidArgument,
        "at most {} synthetic classes are available",
        SHAPES.len() * PERIODS.len()
    );
    ensure!(n_per_class >= 1, InvalidArgument, "need at least one image per class");
    let base = RngStream::named(seed, "synth");
    let n_train = (n_per_class * 4).div_ceil(5);
    let jobs: Vec<(usize, usize)> = (0..n_classes)
        .flat_map(|c| (0..n_per_class).map(move |i| (c, i)))
        .collect();
    let images: Vec<Tensor> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let mut rng = base.derive((c * n_per_class + i) as u64);
            synth_image(c % SHAPES.len(), PERIODS[c / SHAPES.len()], &mut rng)
        })
        .collect();
    let class_names = (0..n_classes)
        .map(|c| format!("{:02}_{}_p{}", c, SHAPES[c % SHAPES.len()], PERIODS[c / SHAPES.len()]))
        .collect();
    Ok(Dataset {
        images,
        labels: jobs.iter().map(|j| j.0).collect(),
        splits: jobs
            .iter()
            .map(|&(_, i)| if i < n_train { Split::Train } else { Split::Val })
            .collect(),
        class_names,
        ids: jobs.iter().map(|&(c, i)| format!("{c:02}_{i:05}")).collect(),
    })
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    path: String,
    label: String,
    #[serde(default)]
    split: Option<Split>,
}

fn load_entries(
    entries: Vec<(PathBuf, String, String, Option<Split>)>,
    class_names: Option<&[String]>,
) -> Result<Dataset> {
    let class_names: Vec<String> = match class_names {
        Some(c) => c.to_vec(),
        None => entries
            .iter()
            .map(|e| e.2.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let index: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let loaded: Vec<Result<Tensor>> = entries.par_iter().map(|e| read_image(&e.0)).collect();
    let mut problems = Vec::new();
    let mut ds = Dataset {
        images: Vec::new(),
        labels: Vec::new(),
        splits: Vec::new(),
        class_names: class_names.clone(),
        ids: Vec::new(),
    };
    for ((path, id, class, split), img) in entries.into_iter().zip(loaded) {
        let Some(&label) = index.get(class.as_str()) else {
            problems.push(format!("{}: unknown class `{class}`", path.display()));
            continue;
        };
        match img {
            Ok(t) if t.shape() == [3, IMAGE_SIZE, IMAGE_SIZE] => {
                ds.images.push(t);
                ds.labels.push(label);
                ds.splits.push(split.unwrap_or(Split::Val));
                ds.ids.push(id);
            }
            Ok(t) => problems.push(format!(
                "{}: expected {IMAGE_SIZE}x{IMAGE_SIZE}, got {}x{}",
                path.display(),
                t.shape()[2],
                t.shape()[1]
            )),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(problems));
    }
    Ok(ds)
}

/// Load a labelled image set. Accepted layouts:
/// - `root/{train,val}/<class>/<image>`: splits from the folder names;
/// - `root/<class>/<image>`: the last 20% of each class (by path) is val;
/// - a CSV file with header `path,label[,split]`, paths relative to it.
///
/// Ordering is lexicographic by path; labels index the sorted class names.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    load_dataset_with_classes(root, None)
}

/// As [`load_dataset`], mapping class names through a fixed list.
pub fn load_dataset_with_classes(root: &Path, classes: Option<&[String]>) -> Result<Dataset> {
    let mut entries = Vec::new();
    if root.is_file() {
        let base = root.parent().unwrap_or(Path::new("."));
        let mut r = csv::Reader::from_path(root).map_err(|e| Error::format(root, e.to_string()))?;
        for row in r.deserialize::<ManifestEntry>() {
            let row = row.map_err(|e| Error::format(root, e.to_string()))?;
            entries.push((base.join(&row.path), row.path.clone(), row.label, row.split));
        }
        entries.sort_by(|a, b| a.1.cmp(&b.1));
    } else {
        let paths = list_images(root)?;
        let split_layout = root.join("train").is_dir() || root.join("val").is_dir();
        let mut by_class: BTreeMap<String, Vec<(PathBuf, String)>> = BTreeMap::new();
        let mut problems = Vec::new();
        for p in paths {
            let id = relative_id(root, &p);
            let parts: Vec<&str> = id.split('/').collect();
            match (split_layout, parts.as_slice()) {
                (true, [split @ ("train" | "val"), class, ..]) if parts.len() >= 3 => {
                    let s = if *split == "train" { Split::Train } else { Split::Val };
                    entries.push((p.clone(), id.clone(), class.to_string(), Some(s)));
                }
                (false, [class, _, ..]) => by_class.entry(class.to_string()).or_default().push((p, id)),
                _ => problems.push(format!("{}: not inside a class folder", p.display())),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Dataset(problems));
        }
        for (class, files) in by_class {
            let n_train = (files.len() * 4).div_ceil(5);
            for (i, (p, id)) in files.into_iter().enumerate() {
                let s = if i < n_train { Split::Train } else { Split::Val };
                entries.push((p, id, class.clone(), Some(s)));
            }
        }
        entries.sort_by(|a, b| a.1.cmp(&b.1));
    }
    if entries.is_empty() {
        return Err(Error::Dataset(vec![format!("{}: no labelled images found", root.display())]));
    }
    load_entries(entries, classes)
}

/// One `(kind, severity)` cell of a corrupted evaluation set, not yet loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSource {
    pub kind: CorruptionKind,
    pub severity: u8,
    /// `(path, id, class name)`
    pub files: Vec<(PathBuf, String, String)>,
}

fn class_of(id: &str) -> String {
    let parts: Vec<&str> = id.split('/').collect();
    match parts.as_slice() {
        ["train" | "val", class, _, ..] => class.to_string(),
        [class, _, ..] => class.to_string(),
        _ => String::new(),
    }
}

/// Discover the cells of a corrupted set: either `root/manifest.csv`
/// written by the generator, or a `<kind>/<severity>/<class>/<image>` tree.
pub fn corrupted_cells(root: &Path) -> Result<Vec<CellSource>> {
    let mut cells: BTreeMap<(CorruptionKind, u8), Vec<(PathBuf, String, String)>> = BTreeMap::new();
    let manifest = root.join("manifest.csv");
    if manifest.is_file() {
        for row in read_manifest(&manifest)? {
            let path = root.join(&row.path);
            cells
                .entry((row.kind, row.severity))
                .or_default()
                .push((path, row.source_id.clone(), class_of(&row.source_id)));
        }
    } else {
        let mut problems = Vec::new();
        for p in list_images(root)? {
            let id = relative_id(root, &p);
            let parts: Vec<&str> = id.split('/').collect();
            let parsed = match parts.as_slice() {
                [kind, sev, class, _, ..] => kind
                    .parse::<CorruptionKind>()
                    .ok()
                    .zip(sev.parse::<u8>().ok().filter(|s| (1..=5).contains(s)))
                    .map(|(k, s)| (k, s, class.to_string(), parts[2..].join("/"))),
                _ => None,
            };
            match parsed {
                Some((k, s, class, rest)) => cells.entry((k, s)).or_default().push((p, rest, class)),
                None => problems.push(format!(
                    "{}: expected <kind>/<severity>/<class>/<image>",
                    p.display()
                )),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Dataset(problems));
        }
    }
    if cells.is_empty() {
        return Err(Error::Dataset(vec![format!("{}: no corrupted images found", root.display())]));
    }
    Ok(cells
        .into_iter()
        .map(|((kind, severity), mut files)| {
            files.sort_by(|a, b| a.1.cmp(&b.1));
            CellSource { kind, severity, files }
        })
        .collect())
}

impl CellSource {
    /// Load the cell's images, labelling through `classes`.
    pub fn load(&self, classes: &[String]) -> Result<Dataset> {
        let entries = self
            .files
            .iter()
            .map(|(p, id, class)| (p.clone(), id.clone(), class.clone(), Some(Split::Val)))
            .collect();
        load_entries(entries, Some(classes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_deterministic_balanced_and_split() {
        let a = synth_dataset(10, 10, 3).unwrap();
        let b = synth_dataset(10, 10, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_histogram(), vec![10; 10]);
        assert_eq!(a.indices(Split::Train).len(), 80);
        assert!(a.images.iter().all(|t| t.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(a.images[0], synth_dataset(10, 10, 4).unwrap().images[0]);
        assert!(synth_dataset(1, 10, 0).is_err());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(3, 5, 1).unwrap();
        ds.save(dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 15);
        assert_eq!(back.class_names, ds.class_names);
        assert_eq!(back.class_histogram(), vec![5; 3]);
        assert_eq!(back.indices(Split::Train).len(), 12);
        let again = load_dataset(dir.path()).unwrap();
        assert_eq!(again.ids, back.ids);
        assert_eq!(again.labels, back.labels);
    }

    #[test]
    fn empty_and_malformed_inputs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).is_err());
        let small = Tensor::zeros(&[3, 8, 8]);
        write_image(&dir.path().join("cat/a.png"), &small).unwrap();
        write_image(&dir.path().join("cat/b.png"), &small).unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Dataset(items)) => assert_eq!(items.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
