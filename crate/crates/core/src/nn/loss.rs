//! Classification and sub-band approximation losses.
//!
//! Both losses average over the batch axis, so a batch of one gives the
//! per-sample value.

use super::{NnError, Tensor};

/// Row-wise softmax of `(n, q)` logits, computed with the max shift.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let (n, q) = logits.dims2()?;
    let mut out = logits.clone();
    for i in 0..n {
        let row = out.item_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    debug_assert_eq!(out.shape(), [n, q]);
    Ok(out)
}

/// Softmax cross-entropy against target distributions `(n, q)` (one-hot for
/// hard labels). Returns the batch-mean loss and its gradient with respect
/// to the logits, `(softmax - y) / n`.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor), NnError> {
    let (n, q) = logits.dims2()?;
    if q < 2 {
        return Err(NnError::shape(format!("cross-entropy needs at least 2 classes, got {q}")));
    }
    if targets.shape() != logits.shape() {
        return Err(NnError::shape(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for i in 0..n {
        let row = logits.item(i);
        let y = targets.item(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for k in 0..q {
            let log_p = row[k] - lse;
            if y[k] != 0.0 {
                loss -= y[k] * log_p;
            }
            grad.item_mut(i)[k] = (log_p.exp() - y[k]) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// One-hot targets for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor, NnError> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(NnError::shape(format!("label {l} out of range for {classes} classes")));
        }
        t.item_mut(i)[l] = 1.0;
    }
    Ok(t)
}

/// Sum over levels and positions of squared differences between
/// approximated and decoded sub-bands, averaged over the batch.
///
/// With `normalize`, each level's sum is divided by its spatial size
/// `M * N`. Returns the loss and one gradient per level.
pub fn approximation_loss(
    approx: &[Tensor],
    targets: &[Tensor],
    normalize: bool,
) -> Result<(f64, Vec<Tensor>), NnError> {
    if approx.len() != targets.len() {
        return Err(NnError::shape(format!(
            "{} approximated levels vs {} decoded levels",
            approx.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(approx.len());
    for (a, d) in approx.iter().zip(targets) {
        if a.shape() != d.shape() {
            return Err(NnError::shape(format!(
                "approximation {:?} vs target {:?}",
                a.shape(),
                d.shape()
            )));
        }
        let n = a.shape().first().copied().unwrap_or(1).max(1) as f64;
        let spatial = match a.shape() {
            [_, _, h, w] if normalize => (h * w) as f64,
            _ => 1.0,
        };
        let scale = 1.0 / (n * spatial);
        let mut sum = 0.0;
        let g = a
            .data()
            .iter()
            .zip(d.data())
            .map(|(x, y)| {
                let diff = x - y;
                sum += diff * diff;
                2.0 * diff * scale
            })
            .collect();
        total += sum * scale;
        grads.push(Tensor::from_vec(a.shape(), g)?);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let logits = Tensor::from_vec(&[1, 3], vec![1000.0, 0.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&logits, &one_hot(&[0], 3).unwrap()).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_costs_ln_q() {
        let logits = Tensor::zeros(&[2, 4]);
        let (loss, grad) = cross_entropy(&logits, &one_hot(&[1, 3], 4).unwrap()).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.item(0)[1] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_errors() {
        let l = Tensor::zeros(&[1, 1]);
        assert!(cross_entropy(&l, &Tensor::zeros(&[1, 1])).is_err());
        let l = Tensor::zeros(&[1, 3]);
        assert!(cross_entropy(&l, &Tensor::zeros(&[1, 4])).is_err());
        assert!(one_hot(&[3], 3).is_err());
    }

    #[test]
    fn approximation_examples() {
        let a = Tensor::full(&[1, 2, 3, 3], 1.5);
        let (l, g) = approximation_loss(&[a.clone()], &[a.clone()], false).unwrap();
        assert_eq!(l, 0.0);
        assert!(g[0].data().iter().all(|&v| v == 0.0));
        let mut b = a.clone();
        b.data_mut()[4] += 2.0;
        let (l, _) = approximation_loss(&[a.clone()], &[b.clone()], false).unwrap();
        assert_eq!(l, 4.0);
        let (l, _) = approximation_loss(&[a.clone()], &[b], true).unwrap();
        assert!((l - 4.0 / 9.0).abs() < 1e-15);
        assert!(approximation_loss(&[a.clone()], &[], false).is_err());
        assert!(approximation_loss(&[a], &[Tensor::zeros(&[1, 2, 3, 4])], false).is_err());
    }

    #[test]
    fn approximation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rand_t = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap()
        };
        let shapes = [[1, 12, 4, 4], [1, 12, 8, 8], [1, 3, 16, 16]];
        let a: Vec<Tensor> = shapes.iter().map(|s| rand_t(s)).collect();
        let d: Vec<Tensor> = shapes.iter().map(|s| rand_t(s)).collect();
        let mut brute = 0.0;
        for (lvl, s) in shapes.iter().enumerate() {
            for c in 0..s[1] {
                for j in 0..s[2] {
                    for k in 0..s[3] {
                        let i = (c * s[2] + j) * s[3] + k;
                        brute += (a[lvl].data()[i] - d[lvl].data()[i]).powi(2);
                    }
                }
            }
        }
        let (l, _) = approximation_loss(&a, &d, false).unwrap();
        assert!((l - brute).abs() < 1e-9 * brute);
    }
}
