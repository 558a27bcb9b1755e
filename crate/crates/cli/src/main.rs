//! `vone`: build front-ends, corrupt datasets, train, ensemble, distil,
//! evaluate and report.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vone_core::corruptions::{build_corrupted_set, CorruptionKind, SEVERITIES};
use vone_core::data::{corrupted_cells, load_dataset, load_dataset_with_classes, synth_dataset, Split};
use vone_core::ensemble::{EnsembleDescriptor, EnsembleModel, LiveTeacher, MemberEntry};
use vone_core::eval::{emit_report, evaluation_csv, predict_all, read_evaluation_csv, top1, EvalReport, OverallMode, Predictor, RunMetadata};
use vone_core::frontend::{config_for, VOneBlock, VOneBlockConfig, Variant};
use vone_core::numerics::RngStream;
use vone_core::training::{train, Architecture, Classifier, DistillConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "vone", version, about = "V1 front-end robustness pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for everything random in the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config: front-end config for `frontend`, training config for
    /// `train` and `distill`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a front-end and write `<out>/<variant>.vone`.
    Frontend {
        #[arg(long, default_value = "standard")]
        variant: Variant,
        /// Total channels, split evenly between simple and complex cells.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Corrupt every image of a dataset into `<out>/<kind>/<severity>/...`.
    Corrupt {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated kinds (default: all 15).
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<CorruptionKind>,
        /// Comma-separated severities in 0..=5 (0 = copy; default 1..=5).
        #[arg(long, value_delimiter = ',')]
        severities: Vec<u8>,
    },
    /// Write a synthetic shape/texture dataset as `<out>/<split>/<class>/<id>.png`.
    SynthData {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        per_class: usize,
    },
    /// Train a back-end behind a frozen front-end (or on pixels without one).
    Train(TrainArgs),
    /// Write an ensemble descriptor `<out>/ensemble.toml`.
    Ensemble {
        /// Member checkpoints.
        #[arg(long = "member", required = true)]
        members: Vec<PathBuf>,
        /// Per-member weights (default uniform).
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Train a student from an ensemble teacher.
    Distill {
        #[command(flatten)]
        train: TrainArgs,
        /// Teacher ensemble descriptor.
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Score a checkpoint or ensemble descriptor on clean and corrupted images.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint (`.ckpt`) or ensemble descriptor (`.toml`).
        #[arg(long)]
        model: PathBuf,
        /// Corrupted set: generator output or a `<kind>/<severity>/<class>/<image>` tree.
        #[arg(long)]
        corrupted: Option<PathBuf>,
        /// Model id in the output (default: file stem).
        #[arg(long)]
        id: Option<String>,
    },
    /// Aggregate evaluation files into tables, figures and metadata.
    Report {
        /// Files written by `eval`.
        #[arg(long = "eval", required = true)]
        evals: Vec<PathBuf>,
        /// Model id to normalise by.
        #[arg(long)]
        base: Option<String>,
        #[arg(long, value_enum, default_value = "kind-mean")]
        overall: Overall,
        /// Aggregate over whatever cells are present.
        #[arg(long)]
        subset: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Front-end file; without it a pixel CNN is trained.
    #[arg(long)]
    frontend: Option<PathBuf>,
    /// Checkpoint name.
    #[arg(long)]
    label: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Overall {
    KindMean,
    CategoryMean,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn no_config(g: &Global, verb: &str) -> Result<()> {
    if g.config.is_some() {
        bail!("--config is not used by `{verb}`");
    }
    Ok(())
}

fn train_config(g: &Global) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &g.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_training(g: &Global, args: &TrainArgs, mut cfg: TrainConfig, teacher: Option<&EnsembleModel>) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let block = args.frontend.as_deref().map(VOneBlock::load).transpose()?;
    let k = ds.n_classes();
    let arch = match &block {
        Some(b) => {
            let (h, _) = b.output_hw(64, 64);
            Architecture::compact(b.n_channels(), h, k)
        }
        None => Architecture::compact_pixels(64, k),
    };
    let live = match teacher {
        Some(t) => {
            ensure!(t.class_names() == ds.class_names.as_slice(), "teacher classes differ from the dataset's");
            let d = cfg.distill.get_or_insert_with(DistillConfig::default);
            Some(LiveTeacher { ensemble: t, draws: d.teacher_noise_draws })
        }
        None => {
            ensure!(cfg.distill.is_none(), "a [distill] section needs the `distill` verb and a teacher");
            None
        }
    };
    let teacher_ref = live.as_ref().map(|t| t as &dyn vone_core::training::Teacher);
    let out = train(arch, block.as_ref(), &ds, &cfg, teacher_ref, &args.label)?;
    create_out(&g.out)?;
    let ckpt = g.out.join(format!("{}.ckpt", args.label));
    out.classifier.save(&ckpt)?;
    out.log.write_csv(&g.out.join(format!("{}_log.csv", args.label)))?;
    if let Some(last) = out.log.last() {
        eprintln!("{}: val acc {:.4} after {} epochs", args.label, last.val_acc, out.log.epochs.len());
    }
    println!("{}", ckpt.display());
    Ok(())
}

/// Member path as written in the descriptor: relative to `dir` when below it.
fn descriptor_path(member: &Path, dir: &Path) -> Result<PathBuf> {
    let abs = member.canonicalize().with_context(|| format!("member {}", member.display()))?;
    let dir = dir.canonicalize()?;
    Ok(abs.strip_prefix(&dir).map(Path::to_path_buf).unwrap_or(abs))
}

fn load_predictor(path: &Path) -> Result<Box<dyn Predictor>> {
    Ok(if path.extension().is_some_and(|e| e == "toml") {
        Box::new(EnsembleDescriptor::load(path)?)
    } else {
        Box::new(Classifier::load(path)?)
    })
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = g.seed.unwrap_or(0);
    match &cli.command {
        Command::Frontend { variant, channels } => {
            let mut cfg: VOneBlockConfig = match &g.config {
                Some(p) => read_toml(p)?,
                None => config_for(*variant),
            };
            if let Some(n) = channels {
                cfg = cfg.with_total_channels(*n);
            }
            if g.seed.is_some() || g.config.is_none() {
                cfg = cfg.with_seed(seed);
            }
            let block = VOneBlock::new(cfg)?;
            create_out(&g.out)?;
            let path = g.out.join(format!("{}.vone", block.config().variant.name()));
            block.save(&path)?;
            eprintln!("{} channels, checksum {:016x}", block.n_channels(), block.checksum());
            println!("{}", path.display());
        }
        Command::Corrupt { data, kinds, severities } => {
            no_config(g, "corrupt")?;
            let kinds = if kinds.is_empty() { CorruptionKind::ALL.to_vec() } else { kinds.clone() };
            let sevs = if severities.is_empty() { SEVERITIES.to_vec() } else { severities.clone() };
            let rows = build_corrupted_set(data, &g.out, &kinds, &sevs, seed)?;
            eprintln!("wrote {} corrupted images", rows.len());
        }
        Command::SynthData { classes, per_class } => {
            no_config(g, "synth-data")?;
            let ds = synth_dataset(*classes, *per_class, seed)?;
            ds.save(&g.out)?;
            eprintln!("wrote {} images in {} classes", ds.len(), ds.n_classes());
        }
        Command::Train(args) => run_training(g, args, train_config(g)?, None)?,
        Command::Distill { train: args, teacher } => {
            let ens = EnsembleDescriptor::load(teacher)?;
            run_training(g, args, train_config(g)?, Some(&ens))?;
        }
        Command::Ensemble { members, weights } => {
            no_config(g, "ensemble")?;
            ensure!(
                weights.is_empty() || weights.len() == members.len(),
                "{} weights for {} members",
                weights.len(),
                members.len()
            );
            create_out(&g.out)?;
            let entries = members
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    Ok(MemberEntry {
                        path: descriptor_path(m, &g.out)?,
                        id: None,
                        weight: weights.get(i).copied(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let desc = EnsembleDescriptor { members: entries };
            let path = g.out.join("ensemble.toml");
            desc.save(&path)?;
            // fail now rather than at evaluation time
            let ens = EnsembleDescriptor::load(&path)?;
            eprintln!("{} members, {} classes", ens.members().len(), ens.n_classes());
            println!("{}", path.display());
        }
        Command::Eval { data, model, corrupted, id } => {
            no_config(g, "eval")?;
            let predictor = load_predictor(model)?;
            let id = id.clone().unwrap_or_else(|| model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            let ds = load_dataset_with_classes(data, Some(predictor.class_names()))?.split(Split::Val);
            ensure!(!ds.is_empty(), "{}: no validation images", data.display());
            let clean_logits = predict_all(predictor.as_ref(), &ds, &RngStream::named(seed, "eval-clean"))?;
            let mut report = EvalReport {
                model_id: id.clone(),
                clean: Some(top1(&clean_logits, &ds.labels)?),
                cells: Default::default(),
                kinds: Vec::new(),
                categories: Vec::new(),
                overall: f64::NAN,
                overall_mode: OverallMode::KindMean,
            };
            if let Some(root) = corrupted {
                for cell in corrupted_cells(root)? {
                    let cds = cell.load(predictor.class_names())?;
                    let stream = RngStream::named(seed, "eval-cells")
                        .derive(cell.kind.index() as u64)
                        .derive(u64::from(cell.severity));
                    let l = predict_all(predictor.as_ref(), &cds, &stream)?;
                    report.cells.insert((cell.kind, cell.severity), top1(&l, &cds.labels)?);
                }
            }
            create_out(&g.out)?;
            let path = g.out.join(format!("{id}.eval.csv"));
            std::fs::write(&path, evaluation_csv(&[report.clone()])).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("{id}: clean {:.4}, {} corruption cells", report.clean.unwrap_or(f64::NAN), report.cells.len());
            println!("{}", path.display());
        }
        Command::Report { evals, base, overall, subset } => {
            no_config(g, "report")?;
            let mode = match overall {
                Overall::KindMean => OverallMode::KindMean,
                Overall::CategoryMean => OverallMode::CategoryMean,
            };
            let mut reports = Vec::new();
            let mut meta = RunMetadata::new(seed, mode);
            for p in evals {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                for e in read_evaluation_csv(&text, p)? {
                    let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    meta.settings.insert(format!("source.{}", e.model_id), name);
                    reports.push(e.report(*subset, mode)?);
                }
            }
            let base_report = match base {
                Some(b) => Some(
                    reports
                        .iter()
                        .find(|r| &r.model_id == b)
                        .with_context(|| format!("base model `{b}` is not among the evaluations"))?
                        .clone(),
                ),
                None => None,
            };
            if let Some(b) = base {
                meta.settings.insert("base".into(), b.clone());
            }
            create_out(&g.out)?;
            for p in emit_report(&reports, base_report.as_ref(), &meta, &g.out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
