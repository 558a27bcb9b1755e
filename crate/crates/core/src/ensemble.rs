//! Uniform logit-averaging ensembles of trained classifiers.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{fnv1a64, RngStream, Tensor};
use crate::training::{Classifier, Teacher};

/// Weighted elementwise mean of member logits, summed in the given order.
pub fn average_logits(member_logits: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    ensure!(!member_logits.is_empty(), InvalidArgument, "no member logits to average");
    ensure!(
        weights.len() == member_logits.len(),
        Shape,
        "{} weights for {} members",
        weights.len(),
        member_logits.len()
    );
    let k = member_logits[0].len();
    if let Some(bad) = member_logits.iter().find(|l| l.len() != k) {
        return Err(Error::Shape(format!("member logits of length {} and {k}", bad.len())));
    }
    let mut out = vec![0.0; k];
    for (l, &w) in member_logits.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(l) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Noise sub-stream key of a member, so a member draws the same noise
/// whatever its position in the list.
pub fn member_key(id: &str) -> u64 {
    fnv1a64(id.as_bytes())
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub id: String,
    pub model: Classifier,
    pub weight: f64,
}

/// Members kept sorted by id; that order fixes the summation order.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    /// Uniform weights `1/M`.
    pub fn uniform(members: Vec<(String, Classifier)>) -> Result<Self> {
        let w = 1.0 / members.len().max(1) as f64;
        Self::weighted(members.into_iter().map(|(id, m)| (id, m, w)).collect())
    }

    pub fn weighted(members: Vec<(String, Classifier, f64)>) -> Result<Self> {
        ensure!(!members.is_empty(), InvalidArgument, "an ensemble needs at least one member");
        let total: f64 = members.iter().map(|m| m.2).sum();
        ensure!(
            (total - 1.0).abs() < 1e-9 && members.iter().all(|m| m.2 >= 0.0),
            InvalidArgument,
            "member weights must be non-negative and sum to 1, got {total}"
        );
        let first = &members[0].1;
        for (id, m, _) in &members {
            ensure!(
                m.n_classes() == first.n_classes() && m.meta.class_names == first.meta.class_names,
                InvalidArgument,
                "member `{id}` has a different class list from `{}`",
                members[0].0
            );
        }
        let mut members: Vec<EnsembleMember> = members
            .into_iter()
            .map(|(id, model, weight)| EnsembleMember { id, model, weight })
            .collect();
        members.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { members })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].model.n_classes()
    }

    pub fn class_names(&self) -> &[String] {
        &self.members[0].model.meta.class_names
    }

    pub fn is_stochastic(&self) -> bool {
        self.members.iter().any(|m| m.model.is_stochastic())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }

    /// Ensemble logits of one [0, 1] image. Member `m` draws its noise from
    /// `noise.derive(member_key(m.id))`.
    pub fn logits(&self, image: &Tensor, noise: &RngStream) -> Result<Vec<f64>> {
        let per: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.model.logits(image, &mut noise.derive(member_key(&m.id))))
            .collect::<Result<_>>()?;
        average_logits(&per, &self.weights())
    }
}

/// Logits `[N][K]` for a batch; image `i` uses `noise.derive(i)`.
pub fn ensemble_predict(ens: &EnsembleModel, batch: &[Tensor], noise: &RngStream) -> Result<Vec<Vec<f64>>> {
    batch
        .par_iter()
        .enumerate()
        .map(|(i, img)| ens.logits(img, &noise.derive(i as u64)))
        .collect()
}

/// Distillation teacher evaluated on the fly, averaging
/// `draws` independent noise draws per presentation.
pub struct LiveTeacher<'a> {
    pub ensemble: &'a EnsembleModel,
    pub draws: usize,
}

impl Teacher for LiveTeacher<'_> {
    fn teacher_logits(&self, _epoch: usize, _index: usize, image: &Tensor, stream: &mut RngStream) -> Result<Vec<f64>> {
        let draws = self.draws.max(1);
        let mut acc = vec![0.0; self.ensemble.n_classes()];
        for d in 0..draws {
            let s = stream.derive(d as u64);
            let per: Vec<Vec<f64>> = self
                .ensemble
                .members
                .iter()
                .map(|m| {
                    let x = m.model.backend_input(image, &mut s.derive(member_key(&m.id)))?;
                    m.model.backend.forward(&x)
                })
                .collect::<Result<_>>()?;
            let avg = average_logits(&per, &self.ensemble.weights())?;
            acc.iter_mut().zip(avg).for_each(|(a, v)| *a += v / draws as f64);
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberEntry {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// Ensemble descriptor file (TOML): `[[member]]` tables with a checkpoint
/// `path` (relative to the descriptor), optional `id` and `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDescriptor {
    #[serde(rename = "member")]
    pub members: Vec<MemberEntry>,
}

impl EnsembleDescriptor {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Load every member checkpoint and build the ensemble.
    pub fn load(path: &Path) -> Result<EnsembleModel> {
        let desc = Self::read(path)?;
        ensure!(!desc.members.is_empty(), InvalidArgument, "{}: no members", path.display());
        let base = path.parent().unwrap_or(Path::new("."));
        let explicit = desc.members.iter().filter(|m| m.weight.is_some()).count();
        ensure!(
            explicit == 0 || explicit == desc.members.len(),
            InvalidArgument,
            "{}: give a weight for every member or for none",
            path.display()
        );
        let n = desc.members.len() as f64;
        let members = desc
            .members
            .iter()
            .map(|m| {
                let p = base.join(&m.path);
                let model = Classifier::load(&p)?;
                let id = m.id.clone().unwrap_or_else(|| {
                    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                });
                Ok((id, model, m.weight.unwrap_or(1.0 / n)))
            })
            .collect::<Result<Vec<_>>>()?;
        EnsembleModel::weighted(members)
    }
}
