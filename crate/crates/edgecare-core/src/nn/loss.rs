//! Softmax, cross-entropy, and the joint gradient at the logits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Clamp applied to the predicted probability before taking the log, so a
/// hard-zero prediction yields a large finite loss instead of infinity.
pub const LOG_CLAMP: f64 = 1e-12;

/// A vector on the probability simplex: entries in [0,1] summing to 1
/// within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<F>(Vec<F>);

impl<F: Scalar> ProbabilityVector<F> {
    pub fn new(probs: Vec<F>) -> Result<Self> {
        let mut sum = F::zero();
        for (i, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < F::zero() || *p > F::one() {
                return Err(Error::InvalidProbability(format!(
                    "entry {i} = {p} outside [0, 1]"
                )));
            }
            sum += *p;
        }
        let tol = F::from_f64_lossy(1e-9);
        if (sum - F::one()).abs() > tol {
            return Err(Error::InvalidProbability(format!("sum {sum} != 1")));
        }
        Ok(ProbabilityVector(probs))
    }

    pub fn probs(&self) -> &[F] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate().skip(1) {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Element-wise mean of several vectors, summed in the order given.
    /// The mean of simplex points stays on the simplex.
    pub fn mean_of(vectors: &[&ProbabilityVector<F>]) -> Self {
        assert!(!vectors.is_empty(), "mean of zero probability vectors");
        let c = vectors[0].len();
        let mut acc = vec![F::zero(); c];
        for v in vectors {
            for (a, p) in acc.iter_mut().zip(v.probs()) {
                *a += *p;
            }
        }
        let inv = F::one() / F::from_usize_lossy(vectors.len());
        for a in acc.iter_mut() {
            *a *= inv;
        }
        ProbabilityVector(acc)
    }
}

/// Softmax with max-subtraction so large logits cannot overflow the exp.
pub fn softmax<F: Scalar>(logits: &[F]) -> ProbabilityVector<F> {
    assert!(!logits.is_empty(), "softmax of empty logits");
    let mut max = logits[0];
    for v in &logits[1..] {
        if *v > max {
            max = *v;
        }
    }
    let mut exps: Vec<F> = logits.iter().map(|v| (*v - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    for e in exps.iter_mut() {
        *e = *e / sum;
    }
    ProbabilityVector(exps)
}

/// One-hot cross-entropy: `-log(pred[label])`, with the probability clamped
/// at [`LOG_CLAMP`] before the log.
pub fn cross_entropy_loss<F: Scalar>(pred: &ProbabilityVector<F>, label: usize) -> Result<F> {
    if label >= pred.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: pred.len(),
        });
    }
    let clamp = F::from_f64_lossy(LOG_CLAMP);
    let p = pred.probs()[label].max(clamp);
    Ok(-p.ln())
}

/// Mean batch loss and the joint softmax+cross-entropy gradient at the
/// logits: `(softmax(z) - onehot(y)) / B` per row.
pub fn softmax_xent_batch<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> Result<(F, Tensor<F>)> {
    let b = logits.shape()[0];
    let c = logits.shape()[1];
    assert_eq!(b, labels.len(), "one label per batch row");
    let inv_b = F::one() / F::from_usize_lossy(b);
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = F::zero();
    for bi in 0..b {
        let row = &logits.data()[bi * c..(bi + 1) * c];
        let probs = softmax(row);
        total += cross_entropy_loss(&probs, labels[bi])?;
        let g = &mut grad.data_mut()[bi * c..(bi + 1) * c];
        for (j, p) in probs.probs().iter().enumerate() {
            let y = if j == labels[bi] { F::one() } else { F::zero() };
            g[j] = (*p - y) * inv_b;
        }
    }
    Ok((total * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&[0.0f64, 0.0, 0.0]);
        for v in p.probs() {
            assert!((v - 1.0 / 3.0).abs() < TOL);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        for c in [-1000.0f64, -3.5, 0.0, 2.0, 1000.0] {
            let a = softmax(&[0.3f64, -1.2, 2.7]);
            let b = softmax(&[0.3 + c, -1.2 + c, 2.7 + c]);
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < TOL, "shift {c}: {x} vs {y}");
            }
        }
    }

    // Frozen from a 40-digit decimal evaluation of exp(z_j)/sum exp(z_k)
    // for z = [1, 2, 3].
    #[test]
    fn softmax_matches_high_precision_reference() {
        let expected = [
            0.0900305731703804579980221f64,
            0.2447284710547976524729596,
            0.6652409557748218895290183,
        ];
        let p = softmax(&[1.0f64, 2.0, 3.0]);
        for (got, want) in p.probs().iter().zip(expected) {
            assert!((got - want).abs() < TOL, "{got} vs {want}");
        }
        // Independent route: p_i = 1 / sum_k exp(z_k - z_i), no shared code
        // with the implementation's max-subtraction path.
        let z = [1.0f64, 2.0, 3.0];
        for (i, got) in p.probs().iter().enumerate() {
            let denom: f64 = z.iter().map(|zk| (zk - z[i]).exp()).sum();
            assert!((got - 1.0 / denom).abs() < TOL);
        }
    }

    #[test]
    fn loss_is_zero_for_perfect_prediction() {
        let p = ProbabilityVector::new(vec![0.0f64, 1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy_loss(&p, 1).unwrap(), 0.0);
    }

    #[test]
    fn loss_of_uniform_is_ln_c() {
        let third = 1.0f64 / 3.0;
        let p = ProbabilityVector::new(vec![third, third, third]).unwrap();
        // ln 3 frozen from a 40-digit evaluation.
        let ln3 = 1.098612288668109691395245f64;
        assert!((cross_entropy_loss(&p, 0).unwrap() - ln3).abs() < TOL);
    }

    #[test]
    fn loss_matches_high_precision_reference() {
        let p = ProbabilityVector::new(vec![0.7f64, 0.2, 0.1]).unwrap();
        // -ln(0.2) frozen from a 40-digit evaluation.
        let want = 1.609437912434100374600759f64;
        assert!((cross_entropy_loss(&p, 1).unwrap() - want).abs() < TOL);
    }

    #[test]
    fn loss_rejects_out_of_range_label() {
        let p = ProbabilityVector::new(vec![0.5f64, 0.5]).unwrap();
        assert!(matches!(
            cross_entropy_loss(&p, 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn logit_gradient_zero_at_optimum() {
        // Softmax output effectively one-hot at the label: gradient ~ 0.
        let logits = Tensor::from_vec(&[1, 3], vec![60.0f64, 0.0, 0.0]).unwrap();
        let (_, grad) = softmax_xent_batch(&logits, &[0]).unwrap();
        for g in grad.data() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn logit_gradient_for_uniform_output() {
        let logits = Tensor::from_vec(&[1, 3], vec![0.0f64, 0.0, 0.0]).unwrap();
        let (loss, grad) = softmax_xent_batch(&logits, &[0]).unwrap();
        let expect = [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for (g, e) in grad.data().iter().zip(expect) {
            assert!((g - e).abs() < TOL);
        }
        assert!((loss - 3.0f64.ln()).abs() < TOL);
    }

    #[test]
    fn probability_vector_rejects_bad_input() {
        assert!(ProbabilityVector::new(vec![0.5f64, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1f64, 1.1]).is_err());
    }
}
