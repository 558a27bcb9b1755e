//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `VONE_SKIP_DESK=1` to skip the desk-scale training experiment
//! (criterion 5, well over an hour on one core); it is then reported as SKIP.
//! Failed criteria are reported but only fail the test target when
//! `VONE_STRICT=1` is set.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use vone_core::corruptions::{apply_corruption, Category, CorruptionKind, CorruptionSpec, SEVERITIES};
use vone_core::data::synth_dataset;
use vone_core::desk::{run_desk, trends, DeskConfig};
use vone_core::eval::{category_report, from_kind_means, relative_report, OverallMode};
use vone_core::frontend::{apply_stochasticity, config_for, CellType, NoiseMode, VOneBlock, VOneBlockConfig, Variant};
use vone_core::numerics::{conv2d, cross_entropy_slice, softmax_slice, RngStream, Tensor, LOG_FLOOR};
use vone_core::training::{
    cross_entropy_loss, distill_loss, train, Architecture, BackendModel, DistillConfig, DistillWeights, LayerSpec,
    ParamRole, TeacherTable, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---------------------------------------------------------------- 1

fn brute_conv(x: &[f64], (c, h, w): (usize, usize, usize), k: &[f64], o: usize, ks: usize, s: usize, p: usize) -> Vec<f64> {
    let ho = (h + 2 * p - ks) / s + 1;
    let wo = (w + 2 * p - ks) / s + 1;
    let mut out = vec![0.0; o * ho * wo];
    for oc in 0..o {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = 0.0;
                for ic in 0..c {
                    for a in 0..ks {
                        for b in 0..ks {
                            let (r, q) = ((i * s + a) as isize - p as isize, (j * s + b) as isize - p as isize);
                            if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < w {
                                acc += x[(ic * h + r as usize) * w + q as usize] * k[((oc * c + ic) * ks + a) * ks + b];
                            }
                        }
                    }
                }
                out[(oc * ho + i) * wo + j] = acc;
            }
        }
    }
    out
}

fn gradient_error(arch: Architecture, seed: u64) -> f64 {
    let mut model = BackendModel::new(arch, seed).unwrap();
    let mut rng = RngStream::new(seed, 7);
    let infos = model.param_info().to_vec();
    for (info, p) in infos.iter().zip(model.params_mut()) {
        if info.role != ParamRole::Weight {
            let shift = if info.role == ParamRole::Scale { 1.5 } else { 0.0 };
            p.iter_mut().for_each(|v| *v = shift + rng.uniform(-1.0, 1.0));
        }
    }
    let x: Vec<f64> = (0..model.input_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let r: Vec<f64> = (0..model.n_outputs()).map(|_| rng.standard_normal()).collect();
    let loss = |m: &BackendModel, x: &[f64]| m.forward(x).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
    let (_, tape) = model.forward_train(&x).unwrap();
    let mut grads = model.zero_grads();
    let dx = model.backward(&tape, &r, &mut grads).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for pi in 0..model.params().len() {
        let n = model.params()[pi].len();
        for j in (0..n).step_by((n / 30).max(1)) {
            let orig = model.params()[pi][j];
            model.params_mut()[pi][j] = orig + h;
            let up = loss(&model, &x);
            model.params_mut()[pi][j] = orig - h;
            let down = loss(&model, &x);
            model.params_mut()[pi][j] = orig;
            worst = worst.max(rel_err(grads[pi][j], (up - down) / (2.0 * h)));
        }
    }
    for j in (0..x.len()).step_by((x.len() / 30).max(1)) {
        let mut xp = x.clone();
        xp[j] += h;
        let up = loss(&model, &xp);
        xp[j] -= 2.0 * h;
        worst = worst.max(rel_err(dx[j], (up - loss(&model, &xp)) / (2.0 * h)));
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut rng = RngStream::named(1, "conv cases");
    let mut conv_err: f64 = 0.0;
    for _ in 0..200 {
        let (c, o) = (1 + rng.below(3) as usize, 1 + rng.below(4) as usize);
        let ks = 1 + rng.below(4) as usize;
        let (s, p) = (1 + rng.below(2) as usize, rng.below(3) as usize);
        let h = ks + rng.below(8) as usize;
        let w = ks + rng.below(8) as usize;
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let k: Vec<f64> = (0..o * c * ks * ks).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let got = conv2d(&Tensor::new(&[c, h, w], x.clone()).unwrap(), &Tensor::new(&[o, c, ks, ks], k.clone()).unwrap(), s, p).unwrap();
        let want = brute_conv(&x, (c, h, w), &k, o, ks, s, p);
        conv_err = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(conv_err, f64::max);
    }

    let dense = LayerSpec::Dense { out_features: 3 };
    let stacks = [
        vec![LayerSpec::Conv { out_channels: 3, kernel: 3, stride: 2, padding: 1 }, dense],
        vec![LayerSpec::Conv { out_channels: 2, kernel: 1, stride: 1, padding: 0 }, dense],
        vec![LayerSpec::Norm, dense],
        vec![LayerSpec::Relu, dense],
        vec![LayerSpec::MaxPool { size: 2, stride: 2 }, dense],
        vec![LayerSpec::GlobalAvgPool, dense],
        vec![dense],
    ];
    let mut grad_err: f64 = 0.0;
    for (i, layers) in stacks.into_iter().enumerate() {
        let arch = Architecture { input_shape: vec![2, 6, 5], layers };
        grad_err = grad_err.max(gradient_error(arch, i as u64));
    }
    grad_err = grad_err.max(gradient_error(Architecture::compact(3, 8, 4), 11));

    let mut identity_err: f64 = 0.0;
    for _ in 0..100 {
        let z: Vec<f64> = (0..6).map(|_| 5.0 * rng.standard_normal()).collect();
        let p = softmax_slice(&z, 1.0).unwrap();
        identity_err = identity_err.max((p.iter().sum::<f64>() - 1.0).abs());
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let q = softmax_slice(&shifted, 1.0).unwrap();
        identity_err = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(identity_err, f64::max);
        let y = rng.below(6) as usize;
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        let (ce, g) = cross_entropy_loss(&z, y).unwrap();
        identity_err = identity_err.max((ce - (lse - z[y])).abs());
        let onehot: Vec<f64> = (0..6).map(|c| f64::from(u8::from(c == y))).collect();
        identity_err = identity_err.max((cross_entropy_slice(&onehot, &p, LOG_FLOOR).unwrap() - ce).abs());
        identity_err = g.iter().zip(p.iter().zip(&onehot)).map(|(g, (p, o))| (g - (p - o)).abs()).fold(identity_err, f64::max);
    }
    let pass = conv_err <= 1e-10 && grad_err < 1e-4 && identity_err < 1e-9;
    outcome(pass, format!("conv max |err| {conv_err:.1e}, grad max rel err {grad_err:.1e}, identities {identity_err:.1e}"))
}

// ---------------------------------------------------------------- 2

/// Power of the zero-padded `n × n` DFT of a `k × k` kernel.
fn dft_power(kernel: &[f64], k: usize, n: usize, cos: &[f64], sin: &[f64]) -> Vec<f64> {
    let mut rows = vec![(0.0, 0.0); k * n];
    for r in 0..k {
        for u in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for c in 0..k {
                let t = (u * c) % n;
                re += kernel[r * k + c] * cos[t];
                im -= kernel[r * k + c] * sin[t];
            }
            rows[r * n + u] = (re, im);
        }
    }
    let mut power = vec![0.0; n * n];
    for v in 0..n {
        for u in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..k {
                let t = (v * r) % n;
                let (x, y) = rows[r * n + u];
                re += x * cos[t] + y * sin[t];
                im += y * cos[t] - x * sin[t];
            }
            power[v * n + u] = re * re + im * im;
        }
    }
    power
}

fn peak_frequency(power: &[f64], n: usize, ppd: f64) -> f64 {
    let best = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
    let f = |i: usize| (if i <= n / 2 { i as f64 } else { i as f64 - n as f64 }) * ppd / n as f64;
    f(best / n).hypot(f(best % n))
}

fn grating(theta_deg: f64, sf: f64, phase: f64, ppd: f64) -> Tensor {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let c = 31.5;
    let mut plane = Vec::with_capacity(64 * 64);
    for row in 0..64 {
        for col in 0..64 {
            let (x, y) = ((col as f64 - c) / ppd, (c - row as f64) / ppd);
            plane.push((2.0 * PI * sf * (x * ct + y * st) + phase).cos());
        }
    }
    Tensor::new(&[3, 64, 64], plane.repeat(3)).unwrap()
}

fn noise_variance(mode: NoiseMode, mu: f64, seed: u64) -> f64 {
    let n = 100_000;
    let out = apply_stochasticity(&Tensor::filled(&[n], mu), mode, 1.0, &mut RngStream::named(seed, "variance")).unwrap();
    let mean = out.mean();
    out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

fn criterion_2() -> Outcome {
    let n = 64;
    let cos: Vec<f64> = (0..n).map(|t| (2.0 * PI * t as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|t| (2.0 * PI * t as f64 / n as f64).sin()).collect();
    let mut band_fail = Vec::new();
    let mut worst_phase: f64 = 0.0;
    for v in Variant::ALL {
        let cfg = config_for(v).with_seed(1);
        let block = VOneBlock::new(cfg.clone()).unwrap();
        let kern = block.luminance_kernels();
        let (k, ppd) = (cfg.kernel_px, cfg.ppd);
        let bin = ppd / n as f64;
        let mut slot = 0;
        let mut failures = 0;
        for p in block.params() {
            let power = match p.cell_type {
                CellType::Simple => {
                    slot += 1;
                    dft_power(&kern.data()[(slot - 1) * k * k..slot * k * k], k, n, &cos, &sin)
                }
                CellType::Complex => {
                    slot += 2;
                    let a = dft_power(&kern.data()[(slot - 2) * k * k..(slot - 1) * k * k], k, n, &cos, &sin);
                    let b = dft_power(&kern.data()[(slot - 1) * k * k..slot * k * k], k, n, &cos, &sin);
                    a.iter().zip(&b).map(|(x, y)| x + y).collect()
                }
            };
            let f = peak_frequency(&power, n, ppd);
            if f < cfg.sf_low - bin || f > cfg.sf_high + bin {
                failures += 1;
            }
        }
        if failures > 0 {
            band_fail.push(format!("{}: {failures}", v.name()));
        }
        for p in block.params().iter().filter(|p| p.cell_type == CellType::Complex) {
            let single = VOneBlockConfig { n_simple: 0, n_complex: 1, ..cfg.clone() };
            let one = VOneBlock::from_params(single, vec![*p]).unwrap();
            let r: Vec<f64> = [0.0, FRAC_PI_4, FRAC_PI_2]
                .iter()
                .map(|&psi| one.activations(&grating(p.theta, p.sf, psi, ppd)).unwrap().at3(0, 16, 16))
                .collect();
            let max = r.iter().copied().fold(f64::MIN, f64::max);
            let min = r.iter().copied().fold(f64::MAX, f64::min);
            worst_phase = worst_phase.max((max - min) / max);
        }
    }

    let block = VOneBlock::new(config_for(Variant::Standard).with_total_channels(64).with_seed(2)).unwrap();
    let mut rng = RngStream::new(3, 0);
    let x = Tensor::new(&[3, 64, 64], (0..3 * 64 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
    let lin = conv2d(&x, &block.kernels(), 2, 9).unwrap();
    let (a, b) = (block.activations(&x).unwrap(), block.activations(&x.scale(-1.0)).unwrap());
    let split = block.config().n_simple * 32 * 32;
    let mut sign_ok = true;
    for i in 0..a.len() {
        let ok = if i < split {
            (a.data()[i] - lin.data()[i].max(0.0)).abs() < 1e-9 && (b.data()[i] - (-lin.data()[i]).max(0.0)).abs() < 1e-9
        } else {
            (a.data()[i] - b.data()[i]).abs() < 1e-9
        };
        sign_ok &= ok;
    }

    let mut var_err: f64 = 0.0;
    for (i, mu) in [1.0, 2.0, 4.0, 8.0].into_iter().enumerate() {
        var_err = var_err.max((noise_variance(NoiseMode::Poisson, mu, i as u64) / mu - 1.0).abs());
        var_err = var_err.max((noise_variance(NoiseMode::SubPoisson, mu, 10 + i as u64) / (mu / 4.0) - 1.0).abs());
    }
    let pass = band_fail.is_empty() && worst_phase < 0.03 && sign_ok && var_err < 0.05;
    outcome(
        pass,
        format!(
            "out-of-band channels [{}], phase deviation {:.2}%, sign test {}, variance rel err {:.2}%",
            band_fail.join(", "),
            100.0 * worst_phase,
            if sign_ok { "ok" } else { "failed" },
            100.0 * var_err
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let images = synth_dataset(10, 2, 5).unwrap().images;
    let mut problems = Vec::new();
    for kind in CorruptionKind::ALL {
        let mut prev: Option<Vec<f64>> = None;
        let mut mses = Vec::new();
        for sev in SEVERITIES {
            let mut per = Vec::new();
            for (i, img) in images.iter().enumerate() {
                let spec = CorruptionSpec::new(kind, sev, 40 + i as u64).unwrap();
                let out = apply_corruption(img, &spec).unwrap();
                if out != apply_corruption(img, &spec).unwrap() {
                    problems.push(format!("{kind}/{sev} not deterministic"));
                }
                if out.shape() != img.shape() || out.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    problems.push(format!("{kind}/{sev} out of range"));
                }
                per.push(out.data().iter().zip(img.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / img.len() as f64);
            }
            let mean = per.iter().sum::<f64>() / per.len() as f64;
            if let Some(p) = &prev {
                if mean < p.iter().sum::<f64>() / p.len() as f64 {
                    problems.push(format!("{kind}: mse falls at severity {sev}"));
                }
            }
            mses.push(mean);
            prev = Some(per);
        }
    }
    let sizes: Vec<usize> = Category::ALL.iter().map(|c| c.kinds().len()).collect();
    let covered: usize = sizes.iter().sum();
    if sizes != [3, 4, 4, 4] || covered != 15 {
        problems.push(format!("category sizes {sizes:?}"));
    }
    outcome(problems.is_empty(), if problems.is_empty() { "15 kinds × 5 severities over 20 images; partition 3/4/4/4".to_string() } else { problems.join("; ") })
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = RngStream::named(4, "distill");
    let w = DistillWeights::default();
    let mut grad_err: f64 = 0.0;
    for _ in 0..50 {
        let s: Vec<f64> = (0..5).map(|_| 2.0 * rng.standard_normal()).collect();
        let t: Vec<f64> = (0..5).map(|_| 2.0 * rng.standard_normal()).collect();
        let y = rng.below(5) as usize;
        let (_, g) = distill_loss(&s, &t, y, &w).unwrap();
        for j in 0..5 {
            let h = 1e-6;
            let mut up = s.clone();
            up[j] += h;
            let mut down = s.clone();
            down[j] -= h;
            let fd = (distill_loss(&up, &t, y, &w).unwrap().0 - distill_loss(&down, &t, y, &w).unwrap().0) / (2.0 * h);
            grad_err = grad_err.max((g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-3));
        }
    }

    let soft_only = DistillWeights { hard_weight: 0.0, ..w };
    let mut soft_zero = true;
    for _ in 0..20 {
        let z: Vec<f64> = (0..7).map(|_| 3.0 * rng.standard_normal()).collect();
        soft_zero &= distill_loss(&z, &z, 2, &soft_only).unwrap().1.iter().all(|&g| g == 0.0);
    }

    let ds = synth_dataset(2, 20, 9).unwrap();
    let cfg = TrainConfig { lr0: 0.01, batch_size: 8, epochs: 3, augment_train: false, seed: 4, ..TrainConfig::default() };
    let arch = Architecture::linear(&[3, 64, 64], 2);
    let table = TeacherTable {
        logits: (0..3).map(|_| (0..ds.len()).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect()).collect(),
    };
    let plain = train(arch.clone(), None, &ds, &cfg, None, "ce").unwrap();
    let kd_cfg = TrainConfig {
        distill: Some(DistillConfig {
            weights: DistillWeights { soft_weight: 0.0, hard_weight: 1.0, ..w },
            teacher_noise_draws: 1,
        }),
        ..cfg
    };
    let kd = train(arch, None, &ds, &kd_cfg, Some(&table), "kd").unwrap();
    let identical = plain.classifier.backend.params() == kd.classifier.backend.params() && plain.log == kd.log;
    outcome(
        grad_err < 1e-5 && soft_zero && identical,
        format!(
            "grad max rel err {grad_err:.1e}, teacher==student soft grad {}, soft_w=0 trajectory {}",
            if soft_zero { "zero" } else { "nonzero" },
            if identical { "bit-identical" } else { "differs" }
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Option<Outcome> {
    if std::env::var("VONE_SKIP_DESK").is_ok_and(|v| v == "1") {
        return None;
    }
    let cfg = DeskConfig::default();
    let results = run_desk(&cfg, &mut |m| eprintln!("  [desk] {m}")).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for t in trends(&results) {
        let seeds: Vec<String> = t.per_seed.iter().map(|v| format!("{v:.3}")).collect();
        lines.push(format!(
            "    {} {}: median {:.3} (seeds {}) needs {}",
            if t.pass { "ok  " } else { "FAIL" },
            t.name,
            t.median,
            seeds.join(", "),
            t.rule
        ));
        pass &= t.pass;
    }
    for r in &results {
        lines.push(format!("    seed {} took {:.0}s", r.seed, r.seconds));
    }
    let total: f64 = results.iter().map(|r| r.seconds).sum();
    let target = if total <= 3600.0 { "within" } else { "over" };
    lines.push(format!("    training and scoring took {total:.0}s, {target} the 3600s laptop target"));
    Some(outcome(pass, format!("3-seed medians\n{}", lines.join("\n"))))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let resnet = [19.8, 23.2, 21.9, 14.5, 20.0, 20.5, 16.6, 24.7, 26.0, 22.8, 28.6, 10.5, 39.1, 33.6, 25.6];
    let vone = [28.7, 32.7, 26.5, 16.9, 19.8, 22.3, 18.8, 26.0, 25.3, 17.7, 26.9, 6.2, 34.3, 37.1, 28.7];
    let ensemble = [33.8, 38.3, 31.7, 24.3, 26.5, 30.3, 26.9, 31.8, 31.7, 22.9, 33.4, 8.3, 42.9, 44.8, 37.0];
    let kinds = |v: &[f64; 15]| CorruptionKind::ALL.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let base = from_kind_means("resnet18", None, &kinds(&resnet), OverallMode::KindMean).unwrap();
    let vr = from_kind_means("vone_resnet18", None, &kinds(&vone), OverallMode::KindMean).unwrap();
    let ens = from_kind_means("variants_ensemble", None, &kinds(&ensemble), OverallMode::KindMean).unwrap();
    let gauss = relative_report(&vr, &base).unwrap().kinds[0].1.unwrap();
    let overall = relative_report(&ens, &base).unwrap().overall.unwrap();
    let noise = base.categories[0].1;
    // independent oracles: plain arithmetic on the table values
    let oracle_gauss = 28.7 / 19.8;
    let oracle_noise = (19.8 + 23.2 + 21.9) / 3.0;
    let oracle_overall = ensemble.iter().sum::<f64>() / resnet.iter().sum::<f64>();
    let round3 = |v: f64| (v * 1000.0).round() / 1000.0;
    // expanding per-kind means into five equal severities must not change anything
    let cells: BTreeMap<_, _> = CorruptionKind::ALL
        .iter()
        .zip(resnet)
        .flat_map(|(&k, v)| SEVERITIES.iter().map(move |&s| ((k, s), v)))
        .collect();
    let expanded = category_report("resnet18", None, &cells, false, OverallMode::KindMean).unwrap();
    let pass = round3(gauss) == round3(oracle_gauss)
        && round3(gauss) == 1.449
        && round3(noise) == round3(oracle_noise)
        && round3(noise) == 21.633
        && round3(overall) == round3(oracle_overall)
        && (1.30..=1.40).contains(&overall)
        && (expanded.overall - base.overall).abs() < 1e-12;
    outcome(pass, format!("gaussian ratio {gauss:.3}, noise category {noise:.2}, ensemble overall ratio {overall:.3}"))
}

// ---------------------------------------------------------------- 7

fn vone(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_vone"))
        .current_dir(dir)
        .args(args)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .expect("run vone");
    assert!(status.success(), "vone {args:?} failed in {}", dir.display());
}

fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(dir.join("train.toml"), "epochs = 2\nbatch_size = 8\nlr0 = 0.025\naugment_train = false\n").unwrap();
    fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
        [&["--seed", "7"][..], extra].concat()
    }
    vone(dir, &with(&["--out", "data", "synth-data", "--classes", "3", "--per-class", "10"]));
    vone(dir, &with(&["--out", "corrupted", "corrupt", "--data", "data/val"]));
    for v in ["standard", "no_noise"] {
        vone(dir, &with(&["--out", "fe", "frontend", "--variant", v, "--channels", "8"]));
        let fe = format!("fe/{v}.vone");
        vone(dir, &with(&["--config", "train.toml", "--out", "models", "train", "--data", "data", "--frontend", &fe, "--label", v]));
    }
    vone(dir, &["--out", "models", "ensemble", "--member", "models/standard.ckpt", "--member", "models/no_noise.ckpt"]);
    let mut evals = Vec::new();
    for m in ["models/standard.ckpt", "models/no_noise.ckpt", "models/ensemble.toml"] {
        vone(dir, &with(&["--out", "eval", "eval", "--data", "data", "--model", m, "--corrupted", "corrupted"]));
        let stem = Path::new(m).file_stem().unwrap().to_string_lossy().into_owned();
        evals.push(format!("eval/{stem}.eval.csv"));
    }
    let mut args = with(&["--out", "report", "report", "--base", "standard"]);
    for e in &evals {
        args.extend(["--eval", e.as_str()]);
    }
    vone(dir, &args);
    std::fs::read_dir(dir.join("report"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline(a.path()), pipeline(b.path()));
    let reports: Vec<&String> = ra.keys().filter(|k| k.ends_with(".csv") || k.ends_with(".svg")).collect();
    let differing: Vec<&String> = reports.iter().copied().filter(|k| ra.get(*k) != rb.get(*k)).collect();
    let pass = differing.is_empty() && ra.len() == rb.len() && reports.len() >= 5;
    outcome(pass, format!("{} CSV/SVG files compared, {} differ", reports.len(), differing.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Option<Outcome>>, Option<Duration>)> = vec![
        ("1 numerics oracles", Box::new(|| Some(criterion_1())), Some(Duration::from_secs(120))),
        ("2 front-end physiology", Box::new(|| Some(criterion_2())), Some(Duration::from_secs(300))),
        ("3 corruption suite", Box::new(|| Some(criterion_3())), Some(Duration::from_secs(300))),
        ("4 distillation contract", Box::new(|| Some(criterion_4())), Some(Duration::from_secs(120))),
        ("5 desk-scale trends", Box::new(criterion_5), None),
        ("6 report-layer exactness", Box::new(|| Some(criterion_6())), Some(Duration::from_secs(1))),
        ("7 end-to-end determinism", Box::new(|| Some(criterion_7())), None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        match result {
            None => println!("SKIP criterion {name} (VONE_SKIP_DESK=1)"),
            Some(o) => {
                let in_time = limit.is_none_or(|l| took <= l);
                let pass = o.pass && in_time;
                failed += usize::from(!pass);
                let budget = limit.map(|l| format!(", limit {}s", l.as_secs())).unwrap_or_default();
                println!(
                    "{} criterion {name} [{:.1}s{budget}]: {}",
                    if pass { "PASS" } else { "FAIL" },
                    took.as_secs_f64(),
                    o.detail
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        if std::env::var("VONE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    } else {
        println!("all criteria passed");
    }
}
