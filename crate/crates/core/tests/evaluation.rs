use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use vone_core::corruptions::{build_corrupted_set, Category, CorruptionKind, SEVERITIES};
use vone_core::data::{corrupted_cells, load_dataset, synth_dataset};
use vone_core::eval::{
    category_report, emit_report, read_evaluation_csv, relative_report, EvalReport, OverallMode, RunMetadata,
};

type Cells = BTreeMap<(CorruptionKind, u8), f64>;

fn cells_strategy() -> impl Strategy<Value = Cells> {
    prop::collection::vec(0.0f64..=1.0, 75).prop_map(|v| {
        CorruptionKind::ALL
            .iter()
            .flat_map(|&k| SEVERITIES.iter().map(move |&s| (k, s)))
            .zip(v)
            .collect()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_identities(cells in cells_strategy()) {
        let r = category_report("m", None, &cells, false, OverallMode::KindMean).unwrap();
        for &(k, v) in &r.kinds {
            let sev: Vec<f64> = SEVERITIES.iter().map(|&s| cells[&(k, s)]).collect();
            prop_assert!((v - mean(&sev)).abs() < 1e-12);
        }
        for &(c, v) in &r.categories {
            let ks: Vec<f64> = r.kinds.iter().filter(|p| p.0.category() == c).map(|p| p.1).collect();
            prop_assert!((v - mean(&ks)).abs() < 1e-12);
        }
        let ks: Vec<f64> = r.kinds.iter().map(|p| p.1).collect();
        prop_assert!((r.overall - mean(&ks)).abs() < 1e-12);
        let by_cat = category_report("m", None, &cells, false, OverallMode::CategoryMean).unwrap();
        let cs: Vec<f64> = by_cat.categories.iter().map(|p| p.1).collect();
        prop_assert!((by_cat.overall - mean(&cs)).abs() < 1e-12);
    }

    #[test]
    fn base_against_itself_is_one(cells in cells_strategy()) {
        let r = category_report("m", Some(0.5), &cells, false, OverallMode::KindMean).unwrap();
        let rel = relative_report(&r, &r).unwrap();
        for (c, v) in &rel.cells {
            prop_assert!(v.is_none() == (cells[c] == 0.0));
            prop_assert!(v.is_none_or(|x| x == 1.0));
        }
        prop_assert!(rel.kinds.iter().all(|p| p.1.is_none_or(|x| x == 1.0)));
    }
}

fn report(id: &str, a: f64) -> EvalReport {
    let cells: Cells = CorruptionKind::ALL
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| SEVERITIES.iter().map(move |&s| ((k, s), a * (1.0 - 0.1 * f64::from(s)) + 0.01 * i as f64)))
        .collect();
    category_report(id, Some(a), &cells, false, OverallMode::KindMean).unwrap()
}

#[test]
fn emitted_report_is_complete_and_reproducible() {
    let reports = vec![report("base", 0.6), report("other", 0.8)];
    let meta = RunMetadata::new(3, OverallMode::KindMean);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = emit_report(&reports, Some(&reports[0]), &meta, a.path()).unwrap();
    emit_report(&reports, Some(&reports[0]), &meta, b.path()).unwrap();
    for f in &fa {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let acc = std::fs::read_to_string(a.path().join("accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 1 + 2 * 21);
    assert_eq!(acc.lines().filter(|l| l.starts_with("base,")).count(), 1 + 15 + 4 + 1);
    let rel = std::fs::read_to_string(a.path().join("relative.csv")).unwrap();
    assert!(rel.lines().filter(|l| l.starts_with("base,")).all(|l| l.contains(",1.000000,")));
    let svg = std::fs::read_to_string(a.path().join("accuracy_categories.svg")).unwrap();
    assert!(svg.starts_with("<svg") && Category::ALL.iter().all(|c| svg.contains(c.name())));
    let meta_text = std::fs::read_to_string(a.path().join("metadata.toml")).unwrap();
    assert!(meta_text.contains("overall_definition") && meta_text.contains("code_version"));

    let cells = std::fs::read_to_string(a.path().join("cells.csv")).unwrap();
    let back = read_evaluation_csv(&cells, Path::new("cells.csv")).unwrap();
    assert_eq!(back[1].report(false, OverallMode::KindMean).unwrap(), reports[1]);
}

#[test]
fn unwritable_output_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    let meta = RunMetadata::new(0, OverallMode::KindMean);
    assert!(emit_report(&[report("m", 0.5)], None, &meta, &file.join("sub")).is_err());
}

#[test]
fn mismatched_coverage_rejected() {
    let full = report("a", 0.5);
    let mut cells = full.cells.clone();
    cells.remove(&(CorruptionKind::Fog, 1));
    let partial = category_report("b", None, &cells, true, OverallMode::KindMean).unwrap();
    assert!(relative_report(&partial, &full).is_err());
}

#[test]
fn generated_and_tree_layouts_ingest_alike() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ds = synth_dataset(2, 5, 4).unwrap();
    ds.save(&data).unwrap();
    let val = data.join("val");
    let kinds = [CorruptionKind::Contrast, CorruptionKind::ShotNoise];
    let gen = dir.path().join("gen");
    let rows = build_corrupted_set(&val, &gen, &kinds, &[1, 3], 9).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);

    let from_manifest = corrupted_cells(&gen).unwrap();
    assert_eq!(from_manifest.len(), 4);
    std::fs::remove_file(gen.join("manifest.csv")).unwrap();
    let from_tree = corrupted_cells(&gen).unwrap();
    let classes = load_dataset(&data).unwrap().class_names;
    for (a, b) in from_manifest.iter().zip(&from_tree) {
        assert_eq!((a.kind, a.severity), (b.kind, b.severity));
        let (da, db) = (a.load(&classes).unwrap(), b.load(&classes).unwrap());
        assert_eq!(da.images, db.images);
        assert_eq!(da.labels, db.labels);
        assert_eq!(da.class_histogram(), vec![1, 1]);
    }

    std::fs::create_dir_all(gen.join("not_a_kind/1/x")).unwrap();
    std::fs::copy(gen.join("contrast/1").read_dir().unwrap().next().unwrap().unwrap().path().read_dir().unwrap().next().unwrap().unwrap().path(), gen.join("not_a_kind/1/x/y.png")).unwrap();
    assert!(corrupted_cells(&gen).is_err());
}
