use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment_geometric, gnt_inject, normalize, AugmentPolicy, GntConfig};
use super::loss::{cross_entropy_loss, distill_loss, DistillWeights};
use super::model::{Architecture, BackendModel, Grads};
use super::optim::{sgd_step, PlateauScheduler};
use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::data::{Dataset, Split};
use crate::error::{ensure, Error, Result};
use crate::frontend::{apply_stochasticity, VOneBlock};
use crate::numerics::{argmax, RngStream, Tensor};

/// Samples per gradient task. Fixed so the reduction order, and therefore
/// the result, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    #[serde(flatten)]
    pub weights: DistillWeights,
    /// Noise draws averaged per teacher evaluation (1 = a single fresh draw).
    pub teacher_noise_draws: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            weights: DistillWeights::default(),
            teacher_noise_draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_patience: usize,
    pub lr_divisor: f64,
    pub gnt: GntConfig,
    pub augment: AugmentPolicy,
    /// Geometric augmentation of training images; normalisation always runs.
    pub augment_train: bool,
    pub distill: Option<DistillConfig>,
    pub seed: u64,
    /// Keep noiseless front-end activations in memory (f32) when the
    /// training inputs are fixed, i.e. without augmentation or GNT.
    pub cache_frontend: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 60,
            plateau_patience: 5,
            lr_divisor: 10.0,
            gnt: GntConfig::default(),
            augment: AugmentPolicy::default(),
            augment_train: true,
            distill: None,
            seed: 0,
            cache_frontend: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr0 > 0.0, InvalidArgument, "lr0 must be positive");
        ensure!((0.0..1.0).contains(&self.momentum), InvalidArgument, "momentum must be in [0, 1)");
        ensure!(self.weight_decay >= 0.0, InvalidArgument, "weight_decay must be non-negative");
        ensure!(self.batch_size >= 1, InvalidArgument, "batch_size must be at least 1");
        ensure!(self.plateau_patience >= 1, InvalidArgument, "plateau_patience must be at least 1");
        ensure!(self.lr_divisor > 1.0, InvalidArgument, "lr_divisor must exceed 1");
        ensure!(
            (0.0..=1.0).contains(&self.gnt.fraction) && self.gnt.sigma >= 0.0,
            InvalidArgument,
            "gnt fraction must be in [0, 1] and sigma non-negative"
        );
        ensure!(
            self.augment.std.iter().all(|&s| s > 0.0),
            InvalidArgument,
            "normalisation std must be positive"
        );
        if let Some(d) = &self.distill {
            ensure!(d.teacher_noise_draws >= 1, InvalidArgument, "teacher_noise_draws must be at least 1");
            ensure!(d.weights.temperature > 0.0, InvalidArgument, "temperature must be positive");
        }
        Ok(())
    }

    fn uses_fixed_inputs(&self) -> bool {
        !self.augment_train && !self.gnt.enabled
    }
}

/// Source of distillation targets for a training image presentation.
pub trait Teacher: Sync {
    /// `image` is the normalised (and possibly augmented) student input;
    /// `stream` is reserved for the teacher's own noise.
    fn teacher_logits(&self, epoch: usize, index: usize, image: &Tensor, stream: &mut RngStream) -> Result<Vec<f64>>;
}

/// Precomputed teacher logits, `logits[epoch][dataset index]`. Epochs past
/// the end wrap around.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TeacherTable {
    pub logits: Vec<Vec<Vec<f64>>>,
}

impl Teacher for TeacherTable {
    fn teacher_logits(&self, epoch: usize, index: usize, _: &Tensor, _: &mut RngStream) -> Result<Vec<f64>> {
        ensure!(!self.logits.is_empty(), InvalidArgument, "teacher table is empty");
        let row = &self.logits[epoch % self.logits.len()];
        match row.get(index) {
            Some(l) if !l.is_empty() => Ok(l.clone()),
            _ => Err(Error::InvalidArgument(format!("teacher table has no entry for image {index}"))),
        }
    }
}

/// A trained model: optional frozen front-end, back-end and metadata.
/// Inputs are `[3, 64, 64]` images in [0, 1]; normalisation is internal.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub frontend: Option<VOneBlock>,
    pub backend: BackendModel,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub label: String,
    pub class_names: Vec<String>,
    pub architecture: Architecture,
    pub train_config: TrainConfig,
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VONECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.backend.n_outputs()
    }

    pub fn is_stochastic(&self) -> bool {
        self.frontend.as_ref().is_some_and(VOneBlock::is_stochastic)
    }

    /// Back-end input for an already-normalised image.
    pub fn backend_input(&self, normalized: &Tensor, noise: &mut RngStream) -> Result<Vec<f64>> {
        match &self.frontend {
            Some(f) => Ok(f.forward_image(normalized, noise)?.into_data()),
            None => Ok(normalized.data().to_vec()),
        }
    }

    /// Logits for a [0, 1] image; `noise` feeds a stochastic front-end.
    pub fn logits(&self, image: &Tensor, noise: &mut RngStream) -> Result<Vec<f64>> {
        let x = normalize(image, &self.meta.train_config.augment)?;
        self.backend.forward(&self.backend_input(&x, noise)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut e = Encoder::new();
        e.bytes(CHECKPOINT_MAGIC);
        e.u32(CHECKPOINT_VERSION);
        let json = serde_json::to_string(&self.meta).map_err(|err| Error::InvalidArgument(err.to_string()))?;
        e.str(&json);
        match &self.frontend {
            Some(f) => {
                let blob = f.to_bytes();
                e.u8(1);
                e.u64(blob.len() as u64);
                e.bytes(&blob);
            }
            None => e.u8(0),
        }
        e.u32(self.backend.params().len() as u32);
        for (info, p) in self.backend.param_info().iter().zip(self.backend.params()) {
            e.str(&info.name);
            e.u32(info.shape.len() as u32);
            for &d in &info.shape {
                e.u32(d as u32);
            }
            e.f64s(p);
        }
        Ok(e.finish())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut d = Decoder::new(bytes, path);
        if d.take(8)? != CHECKPOINT_MAGIC {
            return Err(d.error("not a model checkpoint (bad magic)"));
        }
        let version = d.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(d.error(format!("unsupported checkpoint version {version}")));
        }
        let json = d.str()?;
        let meta: CheckpointMeta = serde_json::from_str(&json).map_err(|e| d.error(e.to_string()))?;
        let frontend = match d.u8()? {
            0 => None,
            1 => {
                let n = d.u64()? as usize;
                Some(VOneBlock::from_bytes(d.take(n)?, path)?)
            }
            f => return Err(d.error(format!("bad front-end flag {f}"))),
        };
        let n = d.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let _name = d.str()?;
            let ndim = d.u32()? as usize;
            let mut len = 1usize;
            for _ in 0..ndim {
                len = len.checked_mul(d.u32()? as usize).ok_or_else(|| d.error("tensor too large"))?;
            }
            params.push(d.f64s(len)?);
        }
        d.expect_end()?;
        let backend = BackendModel::from_params(meta.architecture.clone(), params)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let model = Self { frontend, backend, meta };
        model.check_compatible().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    fn check_compatible(&self) -> Result<()> {
        let want = &self.backend.architecture().input_shape;
        let have = match &self.frontend {
            Some(f) => {
                let (h, w) = f.output_hw(64, 64);
                vec![f.n_channels(), h, w]
            }
            None => vec![3, 64, 64],
        };
        ensure!(
            *want == have,
            Shape,
            "back-end expects input {want:?} but the front-end produces {have:?}"
        );
        ensure!(
            self.meta.class_names.len() == self.backend.n_outputs(),
            Shape,
            "{} class names for {} logits",
            self.meta.class_names.len(),
            self.backend.n_outputs()
        );
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.epoch, r.lr, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Noiseless front-end activations of selected images, stored as f32.
pub struct FrontendCache {
    mu: Vec<Option<Vec<f32>>>,
    shape: Vec<usize>,
}

impl FrontendCache {
    pub fn build(block: &VOneBlock, dataset: &Dataset, indices: &[usize], policy: &AugmentPolicy) -> Result<Self> {
        let computed: Vec<(usize, Vec<f32>)> = indices
            .par_iter()
            .map(|&i| {
                let mu = block.activations(&normalize(&dataset.images[i], policy)?)?;
                Ok((i, mu.data().iter().map(|&v| v as f32).collect()))
            })
            .collect::<Result<_>>()?;
        let (h, w) = block.output_hw(64, 64);
        let mut mu = vec![None; dataset.len()];
        for (i, m) in computed {
            mu[i] = Some(m);
        }
        Ok(Self {
            mu,
            shape: vec![block.n_channels(), h, w],
        })
    }

    /// Back-end input for image `index`: cached μ plus fresh noise.
    pub fn input(&self, block: &VOneBlock, index: usize, noise: &mut RngStream) -> Result<Vec<f64>> {
        let mu = self.mu[index]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("image {index} is not cached")))?;
        let t = Tensor::new(&self.shape, mu.iter().map(|&v| f64::from(v)).collect())?;
        let c = block.config();
        Ok(apply_stochasticity(&t, c.noise_mode, c.noise_gamma, noise)?.into_data())
    }
}

/// Per-presentation random streams.
fn presentation(seed: u64, epoch: usize, index: usize) -> RngStream {
    RngStream::named(seed, "presentation").derive(epoch as u64).derive(index as u64)
}

struct Run<'a> {
    frontend: Option<&'a VOneBlock>,
    dataset: &'a Dataset,
    config: &'a TrainConfig,
    teacher: Option<&'a dyn Teacher>,
    cache: Option<FrontendCache>,
}

impl Run<'_> {
    /// Normalised student image for a training presentation.
    fn train_image(&self, index: usize, stream: &RngStream) -> Result<Tensor> {
        let mut img = self.dataset.images[index].clone();
        if self.config.augment_train {
            img = augment_geometric(&img, &self.config.augment, &mut stream.derive(0))?;
        }
        if self.config.gnt.enabled {
            img = gnt_inject(&img, &self.config.gnt, &mut stream.derive(1));
        }
        normalize(&img, &self.config.augment)
    }

    fn backend_input(&self, index: usize, image: Option<&Tensor>, noise: &mut RngStream) -> Result<Vec<f64>> {
        match (self.frontend, &self.cache, image) {
            (Some(f), Some(c), _) => c.input(f, index, noise),
            (Some(f), None, Some(img)) => Ok(f.forward_image(img, noise)?.into_data()),
            (None, _, Some(img)) => Ok(img.data().to_vec()),
            (_, None, None) => {
                let img = normalize(&self.dataset.images[index], &self.config.augment)?;
                self.backend_input(index, Some(&img), noise)
            }
            (None, Some(_), None) => unreachable!("cache needs a front-end"),
        }
    }

    /// Loss, correctness and accumulated gradients over one chunk.
    fn chunk_grads(&self, model: &BackendModel, epoch: usize, chunk: &[usize]) -> Result<(Grads, f64, usize)> {
        let mut grads = model.zero_grads();
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for &i in chunk {
            let stream = presentation(self.config.seed, epoch, i);
            let needs_image = self.cache.is_none() || self.teacher.is_some();
            let img = if needs_image { Some(self.train_image(i, &stream)?) } else { None };
            let x = self.backend_input(i, img.as_ref(), &mut stream.derive(2))?;
            let (logits, tape) = model.forward_train(&x)?;
            let label = self.dataset.labels[i];
            if logits.iter().any(|v| !v.is_finite()) {
                // surfaces as divergence in the caller
                return Ok((grads, f64::NAN, correct));
            }
            let (loss, dlogits) = match (self.teacher, &self.config.distill) {
                (Some(t), Some(d)) => {
                    let target = t.teacher_logits(epoch, i, img.as_ref().expect("image built"), &mut stream.derive(3))?;
                    distill_loss(&logits, &target, label, &d.weights)?
                }
                _ => cross_entropy_loss(&logits, label)?,
            };
            model.backward(&tape, &dlogits, &mut grads)?;
            loss_sum += loss;
            correct += usize::from(argmax(&logits) == label);
        }
        Ok((grads, loss_sum, correct))
    }

    /// Plain cross-entropy and accuracy on clean validation images.
    fn validate(&self, model: &BackendModel, epoch: usize, indices: &[usize], val_cache: Option<&FrontendCache>) -> Result<(f64, f64)> {
        let base = RngStream::named(self.config.seed, "val").derive(epoch as u64);
        let per: Vec<(f64, bool)> = indices
            .par_iter()
            .map(|&i| {
                let mut noise = base.derive(i as u64);
                let x = match (self.frontend, val_cache) {
                    (Some(f), Some(c)) => c.input(f, i, &mut noise)?,
                    _ => self.backend_input_uncached(i, &mut noise)?,
                };
                let logits = model.forward(&x)?;
                let label = self.dataset.labels[i];
                Ok((cross_entropy_loss(&logits, label)?.0, argmax(&logits) == label))
            })
            .collect::<Result<_>>()?;
        let n = per.len() as f64;
        Ok((
            per.iter().map(|p| p.0).sum::<f64>() / n,
            per.iter().filter(|p| p.1).count() as f64 / n,
        ))
    }

    fn backend_input_uncached(&self, index: usize, noise: &mut RngStream) -> Result<Vec<f64>> {
        let img = normalize(&self.dataset.images[index], &self.config.augment)?;
        match self.frontend {
            Some(f) => Ok(f.forward_image(&img, noise)?.into_data()),
            None => Ok(img.into_data()),
        }
    }
}

pub struct TrainOutcome {
    pub classifier: Classifier,
    pub log: TrainingLog,
}

/// Train a back-end (behind an optional frozen front-end) with SGD,
/// momentum, weight decay on weights and the plateau schedule. With a
/// `teacher` and `config.distill`, the loss is [`distill_loss`].
pub fn train(
    arch: Architecture,
    frontend: Option<&VOneBlock>,
    dataset: &Dataset,
    config: &TrainConfig,
    teacher: Option<&dyn Teacher>,
    label: &str,
) -> Result<TrainOutcome> {
    config.validate()?;
    ensure!(
        teacher.is_some() == config.distill.is_some(),
        InvalidArgument,
        "distillation needs both a teacher and a distill config"
    );
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    for (idx, split) in [(&train_idx, "training"), (&val_idx, "validation")] {
        if idx.is_empty() {
            return Err(Error::Dataset(vec![format!("dataset has no {split} images")]));
        }
    }
    let k = arch.layers.last().map_or(0, |l| match l {
        super::layers::LayerSpec::Dense { out_features } => *out_features,
        _ => 0,
    });
    ensure!(
        k == dataset.n_classes(),
        Shape,
        "architecture has {k} outputs, dataset {} classes",
        dataset.n_classes()
    );
    let mut model = BackendModel::new(arch, config.seed)?;
    let checksum = frontend.map(VOneBlock::checksum);
    let use_cache = frontend.is_some() && config.cache_frontend;
    let cache = match frontend {
        Some(f) if use_cache && config.uses_fixed_inputs() => Some(FrontendCache::build(f, dataset, &train_idx, &config.augment)?),
        _ => None,
    };
    let val_cache = match frontend {
        Some(f) if use_cache => Some(FrontendCache::build(f, dataset, &val_idx, &config.augment)?),
        _ => None,
    };
    let run = Run {
        frontend,
        dataset,
        config,
        teacher,
        cache,
    };
    let mut velocity = model.zero_grads();
    let mut sched = PlateauScheduler::new(config.lr0, config.plateau_patience, config.lr_divisor);
    let mut log = TrainingLog::default();
    for epoch in 0..config.epochs {
        let lr = sched.lr;
        let mut order = train_idx.clone();
        RngStream::named(config.seed, "shuffle").derive(epoch as u64).shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let parts: Vec<(Grads, f64, usize)> = batch
                .par_chunks(CHUNK)
                .map(|c| run.chunk_grads(&model, epoch, c))
                .collect::<Result<_>>()?;
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for (g, l, c) in parts {
                for (acc, gi) in grads.iter_mut().zip(g) {
                    acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
                }
                batch_loss += l;
                correct += c;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: batch_loss / batch.len() as f64,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let roles: Vec<bool> = model.param_info().iter().map(|p| p.role.decays()).collect();
            for (((p, g), v), decays) in model.params_mut().iter_mut().zip(&mut grads).zip(&mut velocity).zip(roles) {
                g.iter_mut().for_each(|x| *x *= scale);
                let wd = if decays { config.weight_decay } else { 0.0 };
                sgd_step(p, g, v, lr, config.momentum, wd)?;
            }
        }
        model.check_finite().map_err(|_| Error::Diverged {
            epoch,
            batch: order.len().div_ceil(config.batch_size),
            loss: f64::NAN,
        })?;
        let (val_loss, val_acc) = run.validate(&model, epoch, &val_idx, val_cache.as_ref())?;
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_loss,
            val_acc,
        });
        sched.step(val_loss);
    }
    if let (Some(f), Some(c)) = (frontend, checksum) {
        ensure!(f.checksum() == c, InvalidArgument, "front-end weights changed during training");
    }
    let meta = CheckpointMeta {
        label: label.to_string(),
        class_names: dataset.class_names.clone(),
        architecture: model.architecture().clone(),
        train_config: config.clone(),
    };
    Ok(TrainOutcome {
        classifier: Classifier {
            frontend: frontend.cloned(),
            backend: model,
            meta,
        },
        log,
    })
}
