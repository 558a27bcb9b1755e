//! Desk-scale trend experiment: eight front-end variants on the synthetic
//! dataset, their uniform ensemble, and No Noise / standard students
//! distilled from it, all scored on clean and corrupted validation images.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruptions::{corrupt_in_memory, CorruptionKind, SEVERITIES};
use crate::data::{synth_dataset, Dataset, Split};
use crate::ensemble::{average_logits, member_key};
use crate::error::{ensure, Result};
use crate::eval::{category_report, top1, EvalReport, OverallMode};
use crate::frontend::{config_for, VOneBlock, Variant};
use crate::numerics::{derive_seed, RngStream, Tensor};
use crate::training::{
    normalize, train, Architecture, Classifier, DistillConfig, FrontendCache, TeacherTable, TrainConfig,
};

pub const ENSEMBLE_ID: &str = "variants_ensemble";
pub const NO_NOISE_STUDENT_ID: &str = "no_noise_student";
pub const STANDARD_STUDENT_ID: &str = "standard_student";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskConfig {
    pub n_classes: usize,
    pub n_per_class: usize,
    /// Seed of the synthetic dataset and the corrupted cells, shared by all runs.
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    pub channels: usize,
    /// Validation images per corruption cell, balanced over classes.
    pub per_cell: usize,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    /// Initial learning rate of the distilled students. The soft/hard
    /// weights scale logit gradients well beyond plain cross-entropy.
    pub distill_lr0: f64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_per_class: 500,
            data_seed: 0,
            seeds: vec![1, 2, 3],
            channels: 32,
            per_cell: 50,
            train: TrainConfig {
                lr0: 0.025,
                batch_size: 32,
                epochs: 10,
                augment_train: false,
                ..TrainConfig::default()
            },
            distill: DistillConfig::default(),
            distill_lr0: 0.0025,
        }
    }
}

/// Corrupted validation images of one `(kind, severity)` cell.
pub struct Cell {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

/// The first `per_cell / K` validation images of every class, corrupted
/// at every kind and severity.
pub fn build_cells(dataset: &Dataset, per_cell: usize, seed: u64) -> Result<Vec<Cell>> {
    let k = dataset.n_classes();
    ensure!(per_cell >= k && per_cell.is_multiple_of(k), InvalidArgument, "per_cell must be a positive multiple of {k}");
    let mut picked = Vec::new();
    for c in 0..k {
        let of_class: Vec<usize> = dataset.indices(Split::Val).into_iter().filter(|&i| dataset.labels[i] == c).collect();
        ensure!(of_class.len() >= per_cell / k, InvalidArgument, "class {c} has too few validation images");
        picked.extend_from_slice(&of_class[..per_cell / k]);
    }
    let images: Vec<Tensor> = picked.iter().map(|&i| dataset.images[i].clone()).collect();
    let labels: Vec<usize> = picked.iter().map(|&i| dataset.labels[i]).collect();
    let mut cells = Vec::new();
    for kind in CorruptionKind::ALL {
        for severity in SEVERITIES {
            cells.push(Cell {
                kind,
                severity,
                images: corrupt_in_memory(&images, kind, severity, seed)?,
                labels: labels.clone(),
            });
        }
    }
    Ok(cells)
}

/// Per-image logits of one model on the clean validation split and on
/// every cell. Image `i` of a set draws from `base.derive(i).derive(member_key(id))`,
/// so averaging members reproduces [`crate::ensemble::EnsembleModel::logits`].
struct ModelLogits {
    clean: Vec<Vec<f64>>,
    cells: Vec<Vec<Vec<f64>>>,
}

fn set_streams(seed: u64) -> (RngStream, Vec<RngStream>) {
    let clean = RngStream::named(seed, "eval-clean");
    let cells = (0..CorruptionKind::ALL.len() * SEVERITIES.len())
        .map(|c| RngStream::named(seed, "eval-cells").derive(c as u64))
        .collect();
    (clean, cells)
}

fn score_model(model: &Classifier, id: &str, val: &[Tensor], cells: &[Cell], seed: u64) -> Result<ModelLogits> {
    let key = member_key(id);
    let (clean_base, cell_bases) = set_streams(seed);
    let run = |images: &[Tensor], base: &RngStream| -> Result<Vec<Vec<f64>>> {
        images
            .par_iter()
            .enumerate()
            .map(|(i, img)| model.logits(img, &mut base.derive(i as u64).derive(key)))
            .collect()
    };
    Ok(ModelLogits {
        clean: run(val, &clean_base)?,
        cells: cells.iter().zip(&cell_bases).map(|(c, b)| run(&c.images, b)).collect::<Result<_>>()?,
    })
}

fn report_of(id: &str, logits: &ModelLogits, val_labels: &[usize], cells: &[Cell]) -> Result<EvalReport> {
    let mut acc = BTreeMap::new();
    for (cell, l) in cells.iter().zip(&logits.cells) {
        acc.insert((cell.kind, cell.severity), top1(l, &cell.labels)?);
    }
    category_report(id, Some(top1(&logits.clean, val_labels)?), &acc, false, OverallMode::KindMean)
}

/// Uniform average, summed in member-id order like the ensemble model.
fn average_models(members: &[(&str, &ModelLogits)]) -> Result<ModelLogits> {
    let mut members = members.to_vec();
    members.sort_by(|a, b| a.0.cmp(b.0));
    let members: Vec<&ModelLogits> = members.into_iter().map(|m| m.1).collect();
    let w = vec![1.0 / members.len() as f64; members.len()];
    let avg = |rows: Vec<&Vec<Vec<f64>>>| -> Result<Vec<Vec<f64>>> {
        (0..rows[0].len())
            .map(|i| average_logits(&rows.iter().map(|r| r[i].clone()).collect::<Vec<_>>(), &w))
            .collect()
    };
    Ok(ModelLogits {
        clean: avg(members.iter().map(|m| &m.clean).collect())?,
        cells: (0..members[0].cells.len())
            .map(|c| avg(members.iter().map(|m| &m.cells[c]).collect()))
            .collect::<Result<_>>()?,
    })
}

/// Ensemble teacher logits for every training presentation: member `m`
/// at epoch `e` on image `i` draws noise from
/// `named(seed, "teacher").derive(member_key(m)).derive(e).derive(i)`.
pub fn teacher_table(members: &[(String, Classifier)], dataset: &Dataset, epochs: usize, seed: u64) -> Result<TeacherTable> {
    let train_idx = dataset.indices(Split::Train);
    let mut sorted: Vec<&(String, Classifier)> = members.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let w = vec![1.0 / sorted.len() as f64; sorted.len()];
    // per member: [epoch][position in train_idx]
    let mut per_member = Vec::new();
    for (id, m) in sorted {
        let base = RngStream::named(seed, "teacher").derive(member_key(id));
        let policy = &m.meta.train_config.augment;
        let cache = match &m.frontend {
            Some(f) => Some(FrontendCache::build(f, dataset, &train_idx, policy)?),
            None => None,
        };
        let mut epochs_out = Vec::with_capacity(epochs);
        for e in 0..epochs {
            let rows: Vec<Vec<f64>> = train_idx
                .par_iter()
                .map(|&i| {
                    let mut noise = base.derive(e as u64).derive(i as u64);
                    let x = match (&m.frontend, &cache) {
                        (Some(f), Some(c)) => c.input(f, i, &mut noise)?,
                        _ => m.backend_input(&normalize(&dataset.images[i], policy)?, &mut noise)?,
                    };
                    m.backend.forward(&x)
                })
                .collect::<Result<_>>()?;
            epochs_out.push(rows);
        }
        per_member.push(epochs_out);
    }
    let mut logits = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let mut row = vec![Vec::new(); dataset.len()];
        for (p, &i) in train_idx.iter().enumerate() {
            let member_rows: Vec<Vec<f64>> = per_member.iter().map(|m| m[e][p].clone()).collect();
            row[i] = average_logits(&member_rows, &w)?;
        }
        logits.push(row);
    }
    Ok(TeacherTable { logits })
}

/// Everything measured under one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    /// Final-epoch validation accuracy from each training log.
    pub train_val_acc: BTreeMap<String, f64>,
    /// Variants, the ensemble and both students.
    pub reports: Vec<EvalReport>,
    pub seconds: f64,
}

impl SeedResult {
    pub fn report(&self, id: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.model_id == id)
    }

    fn get(&self, id: &str) -> &EvalReport {
        self.report(id).unwrap_or_else(|| panic!("seed {} has no report for {id}", self.seed))
    }
}

fn variant_seed(seed: u64, v: Variant) -> u64 {
    derive_seed(seed, &[u64::from(v.index())])
}

/// Front-end of variant `v` under run seed `seed`.
pub fn desk_frontend(cfg: &DeskConfig, v: Variant, seed: u64) -> Result<VOneBlock> {
    VOneBlock::new(config_for(v).with_total_channels(cfg.channels).with_seed(variant_seed(seed, v)))
}

/// Train and score the whole model family for one seed.
pub fn run_seed(
    cfg: &DeskConfig,
    dataset: &Dataset,
    cells: &[Cell],
    seed: u64,
    log: &mut dyn FnMut(&str),
) -> Result<SeedResult> {
    let start = Instant::now();
    let arch = Architecture::compact(cfg.channels, 32, dataset.n_classes());
    let val_idx = dataset.indices(Split::Val);
    let val: Vec<Tensor> = val_idx.iter().map(|&i| dataset.images[i].clone()).collect();
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| dataset.labels[i]).collect();
    let mut train_val_acc = BTreeMap::new();
    let mut members = Vec::new();
    let mut blocks = BTreeMap::new();
    let mut scored = BTreeMap::new();
    for v in Variant::ALL {
        let block = desk_frontend(cfg, v, seed)?;
        let tc = TrainConfig { seed: variant_seed(seed, v), ..cfg.train.clone() };
        let out = train(arch.clone(), Some(&block), dataset, &tc, None, v.name())?;
        let acc = out.log.last().map_or(0.0, |r| r.val_acc);
        train_val_acc.insert(v.name().to_string(), acc);
        scored.insert(v.name().to_string(), score_model(&out.classifier, v.name(), &val, cells, seed)?);
        log(&format!("seed {seed}: {} val {:.3} ({:.0}s)", v.name(), acc, start.elapsed().as_secs_f64()));
        blocks.insert(v, block);
        members.push((v.name().to_string(), out.classifier));
    }
    let table = teacher_table(&members, dataset, cfg.train.epochs, seed)?;
    log(&format!("seed {seed}: teacher table ({:.0}s)", start.elapsed().as_secs_f64()));
    for (v, id) in [(Variant::NoNoise, NO_NOISE_STUDENT_ID), (Variant::Standard, STANDARD_STUDENT_ID)] {
        let tc = TrainConfig {
            seed: variant_seed(seed, v),
            lr0: cfg.distill_lr0,
            distill: Some(cfg.distill.clone()),
            ..cfg.train.clone()
        };
        let out = train(arch.clone(), Some(&blocks[&v]), dataset, &tc, Some(&table), id)?;
        let acc = out.log.last().map_or(0.0, |r| r.val_acc);
        train_val_acc.insert(id.to_string(), acc);
        // the student stands in for its variant, so it keeps the variant's noise key
        scored.insert(id.to_string(), score_model(&out.classifier, v.name(), &val, cells, seed)?);
        log(&format!("seed {seed}: {id} val {acc:.3} ({:.0}s)", start.elapsed().as_secs_f64()));
    }
    let member_logits: Vec<(&str, &ModelLogits)> = Variant::ALL.iter().map(|v| (v.name(), &scored[v.name()])).collect();
    let ensemble = average_models(&member_logits)?;
    let mut reports = Vec::new();
    for v in Variant::ALL {
        reports.push(report_of(v.name(), &scored[v.name()], &val_labels, cells)?);
    }
    reports.push(report_of(ENSEMBLE_ID, &ensemble, &val_labels, cells)?);
    for id in [NO_NOISE_STUDENT_ID, STANDARD_STUDENT_ID] {
        reports.push(report_of(id, &scored[id], &val_labels, cells)?);
    }
    Ok(SeedResult {
        seed,
        train_val_acc,
        reports,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Build the dataset and cells once, then run every seed.
pub fn run_desk(cfg: &DeskConfig, log: &mut dyn FnMut(&str)) -> Result<Vec<SeedResult>> {
    let dataset = synth_dataset(cfg.n_classes, cfg.n_per_class, cfg.data_seed)?;
    let cells = build_cells(&dataset, cfg.per_cell, cfg.data_seed)?;
    cfg.seeds.iter().map(|&s| run_seed(cfg, &dataset, &cells, s, log)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One trend check: the per-seed values, their median and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub name: String,
    pub per_seed: Vec<f64>,
    pub median: f64,
    pub pass: bool,
    pub rule: String,
}

fn trend(name: &str, per_seed: Vec<f64>, rule: &str, ok: impl Fn(f64) -> bool) -> Trend {
    let m = median(per_seed.clone());
    Trend {
        name: name.to_string(),
        per_seed,
        median: m,
        pass: ok(m),
        rule: rule.to_string(),
    }
}

/// The trend checks over seeds, on accuracies in [0, 1].
pub fn trends(results: &[SeedResult]) -> Vec<Trend> {
    let per = |f: &dyn Fn(&SeedResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
    let mut out = Vec::new();
    for v in Variant::ALL {
        out.push(trend(
            &format!("clean accuracy of {}", v.name()),
            per(&|r| r.get(v.name()).clean.unwrap_or(0.0)),
            "> 0.60",
            |m| m > 0.60,
        ));
    }
    let best_member = |r: &SeedResult, f: &dyn Fn(&EvalReport) -> f64| {
        Variant::ALL.iter().map(|v| f(r.get(v.name()))).fold(f64::NEG_INFINITY, f64::max)
    };
    out.push(trend(
        "ensemble overall minus best member overall",
        per(&|r| r.get(ENSEMBLE_ID).overall - best_member(r, &|e| e.overall)),
        ">= 0.01",
        |m| m >= 0.01 - 1e-12,
    ));
    out.push(trend(
        "best member clean minus ensemble clean",
        per(&|r| best_member(r, &|e| e.clean.unwrap_or(0.0)) - r.get(ENSEMBLE_ID).clean.unwrap_or(0.0)),
        "<= 0.02",
        |m| m <= 0.02 + 1e-12,
    ));
    let gain = |r: &SeedResult, student: &str, v: Variant| r.get(student).overall - r.get(v.name()).overall;
    out.push(trend(
        "no_noise student overall gain",
        per(&|r| gain(r, NO_NOISE_STUDENT_ID, Variant::NoNoise)),
        ">= 0.01",
        |m| m >= 0.01 - 1e-12,
    ));
    out.push(trend(
        "standard student gain minus no_noise student gain",
        per(&|r| gain(r, STANDARD_STUDENT_ID, Variant::Standard) - gain(r, NO_NOISE_STUDENT_ID, Variant::NoNoise)),
        "< 0",
        |m| m < 0.0,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleModel;
    use crate::training::Architecture;

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn cached_member_logits_match_ensemble_model() {
        let ds = synth_dataset(2, 10, 1).unwrap();
        let cfg = DeskConfig {
            channels: 8,
            train: TrainConfig { epochs: 1, batch_size: 8, ..DeskConfig::default().train },
            ..DeskConfig::default()
        };
        let mut members = Vec::new();
        let mut scored = Vec::new();
        let cells = build_cells(&ds, 2, 3).unwrap();
        let val: Vec<Tensor> = ds.split(Split::Val).images;
        for v in [Variant::Standard, Variant::LowNoise, Variant::NoNoise] {
            let block = desk_frontend(&cfg, v, 5).unwrap();
            let out = train(Architecture::compact(8, 32, 2), Some(&block), &ds, &cfg.train, None, v.name()).unwrap();
            scored.push(score_model(&out.classifier, v.name(), &val, &cells, 9).unwrap());
            members.push((v.name().to_string(), out.classifier));
        }
        let named: Vec<(&str, &ModelLogits)> = members.iter().map(|m| m.0.as_str()).zip(&scored).collect();
        let avg = average_models(&named).unwrap();
        let ens = EnsembleModel::uniform(members.clone()).unwrap();
        let (clean, cell_bases) = set_streams(9);
        for (i, img) in val.iter().enumerate() {
            assert_eq!(ens.logits(img, &clean.derive(i as u64)).unwrap(), avg.clean[i]);
        }
        let c = 17;
        for (i, img) in cells[c].images.iter().enumerate() {
            assert_eq!(ens.logits(img, &cell_bases[c].derive(i as u64)).unwrap(), avg.cells[c][i]);
        }

        let table = teacher_table(&members, &ds, 2, 4).unwrap();
        let i = ds.indices(Split::Train)[3];
        let x = normalize(&ds.images[i], &members[0].1.meta.train_config.augment).unwrap();
        let mut sorted = members.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let per: Vec<Vec<f64>> = sorted
            .iter()
            .map(|(id, m)| {
                let mut noise = RngStream::named(4, "teacher").derive(member_key(id)).derive(1).derive(i as u64);
                m.backend.forward(&m.backend_input(&x, &mut noise).unwrap()).unwrap()
            })
            .collect();
        let want = average_logits(&per, &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in table.logits[1][i].iter().zip(&want) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
