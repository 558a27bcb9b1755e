//! The synthetic task must defeat a linear read-out of raw pixels while a
//! small CNN learns it. Medians over three seeds.

use vone_core::data::synth_dataset;
use vone_core::desk::DeskConfig;
use vone_core::training::{train, Architecture, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn linear_fails_and_cnn_learns() {
    let base = DeskConfig::default().train;
    let (mut linear, mut cnn) = (Vec::new(), Vec::new());
    for seed in 1..=3u64 {
        let ds = synth_dataset(10, 500, seed).unwrap();
        let cfg = TrainConfig { seed, ..base.clone() };
        let lin = train(Architecture::linear(&[3, 64, 64], 10), None, &ds, &cfg, None, "linear").unwrap();
        linear.push(lin.log.last().unwrap().val_acc);
        let net = train(Architecture::compact_pixels(64, 10), None, &ds, &cfg, None, "cnn").unwrap();
        cnn.push(net.log.last().unwrap().val_acc);
    }
    eprintln!("linear {linear:?}, cnn {cnn:?}");
    assert!(median(linear.clone()) < 0.90, "linear {linear:?}");
    assert!(median(cnn.clone()) > 0.90, "cnn {cnn:?}");
}
