use super::Tensor;
use crate::error::{ensure, Result};

/// Default floor applied to model probabilities inside `log`.
pub const LOG_FLOOR: f64 = 1e-12;

/// Temperature softmax over a 1-D slice, max-subtracted for overflow safety.
pub fn softmax_slice(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    ensure!(!logits.is_empty(), InvalidArgument, "softmax of zero logits");
    ensure!(
        temperature > 0.0 && temperature.is_finite(),
        InvalidArgument,
        "temperature must be positive, got {temperature}"
    );
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(crate::Error::NonFinite(format!("softmax logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&z| ((z - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

pub fn softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    ensure!(
        logits.ndim() == 1,
        Shape,
        "softmax expects a vector, got {:?}",
        logits.shape()
    );
    Ok(Tensor::from_vec(softmax_slice(logits.data(), temperature)?))
}

/// `−Σ p_target · log(max(p_model, floor))`.
pub fn cross_entropy_slice(p_target: &[f64], p_model: &[f64], floor: f64) -> Result<f64> {
    ensure!(
        p_target.len() == p_model.len(),
        Shape,
        "cross-entropy operands have lengths {} and {}",
        p_target.len(),
        p_model.len()
    );
    check_probabilities("target", p_target)?;
    check_probabilities("model", p_model)?;
    Ok(-p_target
        .iter()
        .zip(p_model)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &q)| t * q.max(floor).ln())
        .sum::<f64>())
}

pub fn cross_entropy(p_target: &Tensor, p_model: &Tensor) -> Result<f64> {
    cross_entropy_slice(p_target.data(), p_model.data(), LOG_FLOOR)
}

fn check_probabilities(which: &str, p: &[f64]) -> Result<()> {
    ensure!(
        p.iter().all(|&v| v >= 0.0 && v.is_finite()),
        InvalidArgument,
        "{which} distribution has negative or non-finite entries"
    );
    let total: f64 = p.iter().sum();
    ensure!(
        (total - 1.0).abs() <= 1e-6,
        InvalidArgument,
        "{which} distribution sums to {total}, not 1"
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair_is_half() {
        let p = softmax_slice(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn temperature_five_closed_form() {
        let p = softmax_slice(&[5.0, 0.0], 5.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(softmax_slice(&[1.0, f64::NAN], 1.0).is_err());
        assert!(softmax_slice(&[1.0, f64::INFINITY], 1.0).is_err());
        assert!(softmax_slice(&[1.0], 0.0).is_err());
        assert!(cross_entropy_slice(&[1.0, 0.0], &[1.0], LOG_FLOOR).is_err());
    }

    #[test]
    fn cross_entropy_identities() {
        assert_eq!(cross_entropy_slice(&[1.0, 0.0], &[1.0, 0.0], LOG_FLOOR).unwrap(), 0.0);
        let k = 7;
        let u = vec![1.0 / k as f64; k];
        let h = cross_entropy_slice(&u, &u, LOG_FLOOR).unwrap();
        assert!((h - (k as f64).ln()).abs() < 1e-12);
        let ce = cross_entropy_slice(&[1.0, 0.0], &[0.8, 0.2], LOG_FLOOR).unwrap();
        assert!((ce - 0.2231435513142097).abs() < 1e-12);
        // zero model mass on the target class is clamped, not infinite
        let clamped = cross_entropy_slice(&[1.0, 0.0], &[0.0, 1.0], LOG_FLOOR).unwrap();
        assert!((clamped - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn shift_invariant_and_normalized(
            logits in prop::collection::vec(-1e4f64..1e4, 1..20),
            shift in -100.0f64..100.0,
            t in 0.1f64..10.0,
        ) {
            let p = softmax_slice(&logits, t).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax_slice(&shifted, t).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
