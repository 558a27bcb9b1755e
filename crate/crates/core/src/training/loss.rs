use crate::error::{ensure, Error, Result};

/// Numerically stable `log softmax(z / t)`.
pub fn log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = z.iter().map(|v| (v - max) / t).collect();
    let lse = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
    shifted.iter().map(|v| v - lse).collect()
}

fn check_logits(z: &[f64], label: usize) -> Result<()> {
    ensure!(z.len() >= 2, InvalidArgument, "need at least 2 classes, got {}", z.len());
    ensure!(
        label < z.len(),
        InvalidArgument,
        "label {label} out of range for {} classes",
        z.len()
    );
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(())
}

/// Hard-label term `−log softmax(z)[label]` and its gradient `q − onehot`.
fn hard_term(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let logq = log_softmax(z, 1.0);
    let mut grad: Vec<f64> = logq.iter().map(|l| l.exp()).collect();
    grad[label] -= 1.0;
    (-logq[label], grad)
}

/// Cross-entropy against a class label, with `∂/∂logits`.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_logits(logits, label)?;
    Ok(hard_term(logits, label))
}

/// Hyper-parameters of [`distill_loss`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistillWeights {
    pub temperature: f64,
    pub soft_weight: f64,
    pub hard_weight: f64,
}

impl Default for DistillWeights {
    fn default() -> Self {
        Self {
            temperature: 5.0,
            soft_weight: 100.0,
            hard_weight: 5.0,
        }
    }
}

/// `soft·CE(softmax(t/T), softmax(s/T)) + hard·CE(onehot, softmax(s))`,
/// with no T² factor. Returns the loss and `∂/∂s` in closed form:
/// `soft·(softmax(s/T) − softmax(t/T))/T + hard·(softmax(s) − onehot)`.
pub fn distill_loss(student: &[f64], teacher: &[f64], label: usize, w: &DistillWeights) -> Result<(f64, Vec<f64>)> {
    check_logits(student, label)?;
    ensure!(
        teacher.len() == student.len(),
        Shape,
        "teacher has {} logits, student {}",
        teacher.len(),
        student.len()
    );
    if teacher.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("teacher logits".into()));
    }
    ensure!(w.temperature > 0.0, InvalidArgument, "temperature must be positive");
    let t = w.temperature;
    let logp = log_softmax(teacher, t);
    let logq = log_softmax(student, t);
    let soft: f64 = -logp.iter().zip(&logq).map(|(lp, lq)| lp.exp() * lq).sum::<f64>();
    let (hard, hard_grad) = hard_term(student, label);
    let grad = logq
        .iter()
        .zip(&logp)
        .zip(&hard_grad)
        .map(|((lq, lp), h)| w.soft_weight * (lq.exp() - lp.exp()) / t + w.hard_weight * h)
        .collect();
    Ok((w.soft_weight * soft + w.hard_weight * hard, grad))
}
