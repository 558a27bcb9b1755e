//! Top-1 evaluation and the clean / per-corruption / relative reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::write_file;
use crate::corruptions::{Category, CorruptionKind, SEVERITIES};
use crate::data::Dataset;
use crate::ensemble::EnsembleModel;
use crate::error::{ensure, Error, Result};
use crate::numerics::{argmax, RngStream, Tensor};
use crate::training::Classifier;

/// Anything that maps a [0, 1] image to logits.
pub trait Predictor: Sync {
    fn class_names(&self) -> &[String];
    /// `noise` is the image's own stream.
    fn predict(&self, image: &Tensor, noise: &RngStream) -> Result<Vec<f64>>;
}

impl Predictor for Classifier {
    fn class_names(&self) -> &[String] {
        &self.meta.class_names
    }

    fn predict(&self, image: &Tensor, noise: &RngStream) -> Result<Vec<f64>> {
        self.logits(image, &mut noise.clone())
    }
}

impl Predictor for EnsembleModel {
    fn class_names(&self) -> &[String] {
        EnsembleModel::class_names(self)
    }

    fn predict(&self, image: &Tensor, noise: &RngStream) -> Result<Vec<f64>> {
        self.logits(image, noise)
    }
}

/// Logits for every image; image `i` uses `noise.derive(i)`.
pub fn predict_all(model: &dyn Predictor, dataset: &Dataset, noise: &RngStream) -> Result<Vec<Vec<f64>>> {
    ensure!(
        model.class_names().len() == dataset.n_classes(),
        Shape,
        "model has {} classes, dataset {}",
        model.class_names().len(),
        dataset.n_classes()
    );
    dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| model.predict(img, &noise.derive(i as u64)))
        .collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn top1(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    ensure!(
        logits.len() == labels.len() && !labels.is_empty(),
        Shape,
        "{} predictions for {} labels",
        logits.len(),
        labels.len()
    );
    let hits = logits.iter().zip(labels).filter(|(l, &y)| argmax(l) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-1 accuracy with evaluation preprocessing (normalisation only).
pub fn evaluate_accuracy(model: &dyn Predictor, dataset: &Dataset, noise: &RngStream) -> Result<f64> {
    top1(&predict_all(model, dataset, noise)?, &dataset.labels)
}

/// How the "overall corruption" aggregate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallMode {
    /// Unweighted mean over the severity-averaged kinds.
    #[default]
    KindMean,
    /// Unweighted mean over the four category means.
    CategoryMean,
}

impl OverallMode {
    pub fn describe(self) -> &'static str {
        match self {
            OverallMode::KindMean => "mean over corruption kinds of the severity-averaged accuracy",
            OverallMode::CategoryMean => "mean over the four category means",
        }
    }
}

/// Accuracies of one model: clean, per cell, and the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub clean: Option<f64>,
    /// `(kind, severity) → accuracy`
    pub cells: BTreeMap<(CorruptionKind, u8), f64>,
    /// Severity-averaged, in canonical kind order.
    pub kinds: Vec<(CorruptionKind, f64)>,
    pub categories: Vec<(Category, f64)>,
    pub overall: f64,
    pub overall_mode: OverallMode,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Aggregate per-cell accuracies: kind = mean over its severities,
/// category = mean over its kinds, overall per `mode`. Without
/// `allow_subset` all 15 × 5 cells must be present; with it, means run
/// over whatever is present (each kind needs at least one severity).
pub fn category_report(
    model_id: &str,
    clean: Option<f64>,
    cells: &BTreeMap<(CorruptionKind, u8), f64>,
    allow_subset: bool,
    mode: OverallMode,
) -> Result<EvalReport> {
    ensure!(!cells.is_empty(), InvalidArgument, "no corruption cells to aggregate");
    if let Some(((k, s), _)) = cells.iter().find(|((_, s), _)| !SEVERITIES.contains(s)) {
        return Err(Error::InvalidArgument(format!("{k} has invalid severity {s}")));
    }
    if !allow_subset {
        let missing: Vec<String> = CorruptionKind::ALL
            .iter()
            .flat_map(|&k| SEVERITIES.iter().map(move |&s| (k, s)))
            .filter(|c| !cells.contains_key(c))
            .map(|(k, s)| format!("{k}/{s}"))
            .collect();
        ensure!(
            missing.is_empty(),
            InvalidArgument,
            "missing {} corruption cells (first: {}); pass the subset flag to aggregate anyway",
            missing.len(),
            missing[0]
        );
    }
    let kinds: Vec<(CorruptionKind, f64)> = CorruptionKind::ALL
        .iter()
        .filter_map(|&k| {
            let v: Vec<f64> = SEVERITIES.iter().filter_map(|&s| cells.get(&(k, s)).copied()).collect();
            (!v.is_empty()).then(|| (k, mean(v)))
        })
        .collect();
    let mut report = from_kind_means(model_id, clean, &kinds, mode)?;
    report.cells = cells.clone();
    Ok(report)
}

/// Aggregate from already severity-averaged kind accuracies.
pub fn from_kind_means(
    model_id: &str,
    clean: Option<f64>,
    kinds: &[(CorruptionKind, f64)],
    mode: OverallMode,
) -> Result<EvalReport> {
    ensure!(!kinds.is_empty(), InvalidArgument, "no kind accuracies to aggregate");
    let mut sorted = kinds.to_vec();
    sorted.sort_by_key(|(k, _)| k.index());
    sorted.dedup_by_key(|(k, _)| *k);
    ensure!(sorted.len() == kinds.len(), InvalidArgument, "duplicate corruption kinds");
    let categories: Vec<(Category, f64)> = Category::ALL
        .iter()
        .filter_map(|&c| {
            let v: Vec<f64> = sorted.iter().filter(|(k, _)| k.category() == c).map(|p| p.1).collect();
            (!v.is_empty()).then(|| (c, mean(v)))
        })
        .collect();
    let overall = match mode {
        OverallMode::KindMean => mean(sorted.iter().map(|p| p.1)),
        OverallMode::CategoryMean => mean(categories.iter().map(|p| p.1)),
    };
    Ok(EvalReport {
        model_id: model_id.to_string(),
        clean,
        cells: BTreeMap::new(),
        kinds: sorted,
        categories,
        overall,
        overall_mode: mode,
    })
}

/// A ratio against the base model; `None` flags a zero base value.
pub type Ratio = Option<f64>;

fn ratio(a: f64, b: f64) -> Ratio {
    (b != 0.0).then(|| a / b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeReport {
    pub model_id: String,
    pub base_id: String,
    pub clean: Option<Ratio>,
    pub cells: BTreeMap<(CorruptionKind, u8), Ratio>,
    pub kinds: Vec<(CorruptionKind, Ratio)>,
    pub categories: Vec<(Category, Ratio)>,
    pub overall: Ratio,
}

/// Divide every aggregate of `model` by the base's matching aggregate.
pub fn relative_report(model: &EvalReport, base: &EvalReport) -> Result<RelativeReport> {
    let same_kinds = model.kinds.iter().map(|p| p.0).eq(base.kinds.iter().map(|p| p.0));
    let same_cells = model.cells.keys().eq(base.cells.keys());
    ensure!(
        same_kinds && same_cells && model.overall_mode == base.overall_mode,
        InvalidArgument,
        "`{}` and base `{}` cover different corruption cells",
        model.model_id,
        base.model_id
    );
    Ok(RelativeReport {
        model_id: model.model_id.clone(),
        base_id: base.model_id.clone(),
        clean: match (model.clean, base.clean) {
            (Some(a), Some(b)) => Some(ratio(a, b)),
            _ => None,
        },
        cells: model.cells.iter().map(|(c, &a)| (*c, ratio(a, base.cells[c]))).collect(),
        kinds: model.kinds.iter().zip(&base.kinds).map(|(a, b)| (a.0, ratio(a.1, b.1))).collect(),
        categories: model
            .categories
            .iter()
            .zip(&base.categories)
            .map(|(a, b)| (a.0, ratio(a.1, b.1)))
            .collect(),
        overall: ratio(model.overall, base.overall),
    })
}

/// Aggregate rows `(level, name, value)`: clean, kinds, categories, overall.
fn absolute_rows(r: &EvalReport) -> Vec<(&'static str, String, Option<f64>)> {
    let mut rows = vec![("clean", "clean".to_string(), r.clean)];
    rows.extend(r.kinds.iter().map(|(k, v)| ("kind", k.name().to_string(), Some(*v))));
    rows.extend(r.categories.iter().map(|(c, v)| ("category", c.name().to_string(), Some(*v))));
    rows.push(("overall", "overall".to_string(), Some(r.overall)));
    rows
}

fn relative_rows(r: &RelativeReport) -> Vec<(&'static str, String, Ratio)> {
    let mut rows = vec![("clean", "clean".to_string(), r.clean.flatten())];
    rows.extend(r.kinds.iter().map(|(k, v)| ("kind", k.name().to_string(), *v)));
    rows.extend(r.categories.iter().map(|(c, v)| ("category", c.name().to_string(), *v)));
    rows.push(("overall", "overall".to_string(), r.overall));
    rows
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn absolute_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,level,name,accuracy\n");
    for r in reports {
        for (level, name, v) in absolute_rows(r) {
            let _ = writeln!(out, "{},{level},{name},{}", r.model_id, fmt_value(v));
        }
    }
    out
}

pub fn relative_csv(reports: &[RelativeReport]) -> String {
    let mut out = String::from("model,base,level,name,ratio,flag\n");
    for r in reports {
        for (level, name, v) in relative_rows(r) {
            let flag = if v.is_none() { "undefined" } else { "" };
            let _ = writeln!(out, "{},{},{level},{name},{},{flag}", r.model_id, r.base_id, fmt_value(v));
        }
    }
    out
}

/// Raw evaluation table: a `clean,0` row, then one row per cell. Values
/// use the shortest exact decimal form so the file reads back losslessly.
pub fn evaluation_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,kind,severity,accuracy\n");
    for r in reports {
        if let Some(c) = r.clean {
            let _ = writeln!(out, "{},clean,0,{c}", r.model_id);
        }
        for ((k, s), v) in &r.cells {
            let _ = writeln!(out, "{},{k},{s},{v}", r.model_id);
        }
    }
    out
}

/// Per-model clean accuracy and cell accuracies read from [`evaluation_csv`] output.
pub struct Evaluation {
    pub model_id: String,
    pub clean: Option<f64>,
    pub cells: BTreeMap<(CorruptionKind, u8), f64>,
}

impl Evaluation {
    pub fn report(&self, allow_subset: bool, mode: OverallMode) -> Result<EvalReport> {
        category_report(&self.model_id, self.clean, &self.cells, allow_subset, mode)
    }
}

pub fn read_evaluation_csv(text: &str, origin: &Path) -> Result<Vec<Evaluation>> {
    let mut out: Vec<Evaluation> = Vec::new();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: usize, msg: String| Error::format(origin, format!("line {line}: {msg}"));
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let acc: f64 = rec[3].parse().map_err(|_| bad(line, format!("bad accuracy `{}`", &rec[3])))?;
        let model = rec[0].to_string();
        if out.last().is_none_or(|e| e.model_id != model) {
            out.push(Evaluation { model_id: model, clean: None, cells: BTreeMap::new() });
        }
        let cur = out.last_mut().expect("pushed above");
        if &rec[1] == "clean" {
            cur.clean = Some(acc);
            continue;
        }
        let kind: CorruptionKind = rec[1].parse().map_err(|_| bad(line, format!("unknown kind `{}`", &rec[1])))?;
        let sev: u8 = rec[2].parse().map_err(|_| bad(line, format!("bad severity `{}`", &rec[2])))?;
        if cur.cells.insert((kind, sev), acc).is_some() {
            return Err(bad(line, format!("duplicate cell {kind}/{sev}")));
        }
    }
    ensure!(!out.is_empty(), InvalidArgument, "{}: no evaluation rows", origin.display());
    Ok(out)
}

const PALETTE: [&str; 8] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c"];

/// Grouped bar chart: one group per label, one bar per series.
pub fn bar_chart_svg(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let (w, h) = (120.0 + 90.0 * groups.len() as f64, 360.0);
    let (left, bottom, top) = (60.0, 300.0, 40.0);
    let max = series
        .iter()
        .flat_map(|s| s.1.iter().flatten())
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1e-9)
        * 1.1;
    let y = |v: f64| bottom - (bottom - top) * v / max;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, xml(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{:.1}" y2="{bottom}" stroke="black"/>"#, w - 20.0);
    for t in 0..=4 {
        let v = max * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y(v) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(14,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (top + bottom) / 2.0,
        xml(y_label)
    );
    let bar_w = 70.0 / series.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let x0 = left + 15.0 + 90.0 * gi as f64;
        for (si, (_, vals)) in series.iter().enumerate() {
            if let Some(v) = vals.get(gi).copied().flatten() {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"/>"#,
                    x0 + bar_w * si as f64,
                    y(v),
                    bottom - y(v),
                    PALETTE[si % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + 35.0, bottom + 16.0, xml(g));
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let ly = bottom + 34.0 + 14.0 * (si / 4) as f64;
        let lx = left + 170.0 * (si % 4) as f64;
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#, ly - 9.0, PALETTE[si % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 14.0, xml(name));
    }
    s.push_str("</svg>\n");
    s
}

fn xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Run metadata written next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub code_version: String,
    pub seed: u64,
    pub overall_definition: String,
    /// Free-form settings (model configs, dataset, epochs, ...).
    pub settings: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(seed: u64, mode: OverallMode) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            overall_definition: mode.describe().to_string(),
            settings: BTreeMap::new(),
        }
    }
}

/// Write `accuracy.csv`, `cells.csv`, `metadata.toml`, the SVG figures
/// and, with a base, `relative.csv`. Output depends only on the inputs.
pub fn emit_report(reports: &[EvalReport], base: Option<&EvalReport>, meta: &RunMetadata, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    ensure!(!reports.is_empty(), InvalidArgument, "no reports to emit");
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        write_file(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put("accuracy.csv", absolute_csv(reports))?;
    put("cells.csv", evaluation_csv(reports))?;
    let groups: Vec<String> = reports[0]
        .categories
        .iter()
        .map(|(c, _)| c.name().to_string())
        .chain(["overall".to_string()])
        .collect();
    let abs_series: Vec<(String, Vec<Option<f64>>)> = reports
        .iter()
        .map(|r| {
            let v = r.categories.iter().map(|c| Some(c.1)).chain([Some(r.overall)]).collect();
            (r.model_id.clone(), v)
        })
        .collect();
    put("accuracy_categories.svg", bar_chart_svg("Corruption accuracy", "top-1 accuracy", &groups, &abs_series))?;
    if let Some(base) = base {
        let rel: Vec<RelativeReport> = reports.iter().map(|r| relative_report(r, base)).collect::<Result<_>>()?;
        put("relative.csv", relative_csv(&rel))?;
        let series = rel
            .iter()
            .map(|r| (r.model_id.clone(), r.categories.iter().map(|c| c.1).chain([r.overall]).collect()))
            .collect::<Vec<_>>();
        let title = format!("Accuracy relative to {}", base.model_id);
        put("relative_categories.svg", bar_chart_svg(&title, "relative accuracy", &groups, &series))?;
    }
    let meta_text = toml::to_string(meta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    put("metadata.toml", meta_text)?;
    Ok(written)
}
