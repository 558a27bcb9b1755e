use proptest::prelude::*;

use vone_core::data::synth_dataset;
use vone_core::ensemble::{average_logits, ensemble_predict, EnsembleDescriptor, EnsembleModel, MemberEntry};
use vone_core::eval::{evaluate_accuracy, top1};
use vone_core::frontend::{config_for, VOneBlock, Variant};
use vone_core::numerics::{argmax, RngStream};
use vone_core::training::{Architecture, BackendModel, CheckpointMeta, Classifier, TrainConfig};

fn member(variant: Variant, seed: u64) -> Classifier {
    let block = VOneBlock::new(config_for(variant).with_total_channels(8).with_seed(seed)).unwrap();
    let arch = Architecture::compact(8, 32, 3);
    Classifier {
        frontend: Some(block),
        backend: BackendModel::new(arch.clone(), seed).unwrap(),
        meta: CheckpointMeta {
            label: format!("{}-{seed}", variant.name()),
            class_names: vec!["a".into(), "b".into(), "c".into()],
            architecture: arch,
            train_config: TrainConfig::default(),
        },
    }
}

#[test]
fn member_order_never_changes_logits() {
    let ms = vec![
        ("b".to_string(), member(Variant::Standard, 1)),
        ("a".to_string(), member(Variant::NoNoise, 2)),
        ("c".to_string(), member(Variant::LowNoise, 3)),
    ];
    let mut rev = ms.clone();
    rev.reverse();
    let (x, y) = (EnsembleModel::uniform(ms).unwrap(), EnsembleModel::uniform(rev).unwrap());
    let imgs = synth_dataset(3, 2, 0).unwrap().images;
    let noise = RngStream::named(5, "eval");
    let (lx, ly) = (ensemble_predict(&x, &imgs, &noise).unwrap(), ensemble_predict(&y, &imgs, &noise).unwrap());
    for (a, b) in lx.iter().flatten().zip(ly.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn single_deterministic_member_is_the_model() {
    let m = member(Variant::NoNoise, 4);
    let ens = EnsembleModel::uniform(vec![("only".into(), m.clone())]).unwrap();
    let ds = synth_dataset(3, 5, 1).unwrap();
    let noise = RngStream::named(0, "eval");
    let got = ensemble_predict(&ens, &ds.images, &noise).unwrap();
    for (img, l) in ds.images.iter().zip(&got) {
        assert_eq!(&m.logits(img, &mut RngStream::new(9, 9)).unwrap(), l);
    }
    assert_eq!(evaluate_accuracy(&ens, &ds, &noise).unwrap(), evaluate_accuracy(&m, &ds, &noise).unwrap());
}

#[test]
fn duplicating_every_deterministic_member_changes_nothing() {
    let a = member(Variant::NoNoise, 6);
    let b = member(Variant::NoNoise, 7);
    let once = EnsembleModel::uniform(vec![("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
    let twice = EnsembleModel::uniform(vec![
        ("a".into(), a.clone()),
        ("a2".into(), a),
        ("b".into(), b.clone()),
        ("b2".into(), b),
    ])
    .unwrap();
    let imgs = synth_dataset(3, 2, 2).unwrap().images;
    let noise = RngStream::named(1, "eval");
    let (x, y) = (ensemble_predict(&once, &imgs, &noise).unwrap(), ensemble_predict(&twice, &imgs, &noise).unwrap());
    for (p, q) in x.iter().flatten().zip(y.iter().flatten()) {
        assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
    }
}

#[test]
fn stochastic_ensembles_are_reproducible() {
    let ens = EnsembleModel::uniform(vec![("s".into(), member(Variant::Standard, 8)), ("n".into(), member(Variant::NoNoise, 9))]).unwrap();
    let ds = synth_dataset(3, 4, 3).unwrap();
    let noise = RngStream::named(2, "eval");
    assert_eq!(evaluate_accuracy(&ens, &ds, &noise).unwrap(), evaluate_accuracy(&ens, &ds, &noise).unwrap());
    assert!(ens.is_stochastic());
}

#[test]
fn mismatched_members_rejected() {
    let mut other = member(Variant::NoNoise, 1);
    other.meta.class_names[0] = "z".into();
    assert!(EnsembleModel::uniform(vec![("a".into(), member(Variant::NoNoise, 1)), ("b".into(), other)]).is_err());
    assert!(EnsembleModel::uniform(Vec::new()).is_err());
    assert!(EnsembleModel::weighted(vec![("a".into(), member(Variant::NoNoise, 1), 0.7)]).is_err());
}

#[test]
fn descriptor_round_trip_loads_members() {
    let dir = tempfile::tempdir().unwrap();
    member(Variant::NoNoise, 1).save(&dir.path().join("m1.ckpt")).unwrap();
    member(Variant::Standard, 2).save(&dir.path().join("m2.ckpt")).unwrap();
    let desc = EnsembleDescriptor {
        members: ["m1.ckpt", "m2.ckpt"]
            .iter()
            .map(|p| MemberEntry { path: p.into(), id: None, weight: None })
            .collect(),
    };
    let path = dir.path().join("ens.toml");
    desc.save(&path).unwrap();
    assert_eq!(EnsembleDescriptor::read(&path).unwrap(), desc);
    let ens = EnsembleDescriptor::load(&path).unwrap();
    assert_eq!(ens.weights(), vec![0.5, 0.5]);
    assert_eq!(ens.members()[0].id, "m1");
    std::fs::write(&path, "[[member]]\npath = \"missing.ckpt\"\n").unwrap();
    assert!(EnsembleDescriptor::load(&path).is_err());
}

fn logits_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 2usize..7).prop_flat_map(|(m, k)| prop::collection::vec(prop::collection::vec(-20.0f64..20.0, k), m))
}

proptest! {
    #[test]
    fn positive_scaling_keeps_every_argmax(members in logits_strategy(), c in 0.01f64..100.0) {
        let w = vec![1.0 / members.len() as f64; members.len()];
        let scaled: Vec<Vec<f64>> = members.iter().map(|l| l.iter().map(|v| v * c).collect()).collect();
        let a = average_logits(&members, &w).unwrap();
        let b = average_logits(&scaled, &w).unwrap();
        prop_assert_eq!(argmax(&a), argmax(&b));
        let labels = vec![0usize];
        prop_assert_eq!(top1(&[a], &labels).unwrap(), top1(&[b], &labels).unwrap());
    }

    #[test]
    fn average_is_bounded_by_members(members in logits_strategy()) {
        let w = vec![1.0 / members.len() as f64; members.len()];
        let avg = average_logits(&members, &w).unwrap();
        for (j, v) in avg.iter().enumerate() {
            let lo = members.iter().map(|m| m[j]).fold(f64::INFINITY, f64::min);
            let hi = members.iter().map(|m| m[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }
    }
}
