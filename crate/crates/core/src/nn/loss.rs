//! Scalar losses and their gradients with respect to network outputs.

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `⟨a,b⟩ / (‖a‖‖b‖)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Returns `a / ‖a‖`.
pub fn l2_normalize(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate("normalizing a zero vector"));
    }
    Ok(a.iter().map(|x| x / n).collect())
}

/// Squared distance between the unit-normalized prediction and target,
/// `‖p/‖p‖ − z/‖z‖‖² = 2 − 2·cos(p, z)`, with its gradient in `p`. The
/// target is a constant.
pub fn normalized_mse(prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let cos = cosine_similarity(prediction, target)?;
    let np = norm(prediction);
    let nz = norm(target);
    // d cos / dp = z/(|p||z|) − cos·p/|p|²
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(&p, &z)| -2.0 * (z / (np * nz) - cos * p / (np * np)))
        .collect();
    Ok((2.0 - 2.0 * cos, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[target]` and its gradient `softmax − one_hot`.
pub fn nll_loss(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert!((c - 2.0 / (14f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
        assert!((c - 0.3780).abs() < 1e-4);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn nll_examples() {
        let (l, _) = nll_loss(&[1000.0, -1000.0, -1000.0], 0).unwrap();
        assert!(l.abs() < 1e-12);
        let (l, _) = nll_loss(&[0.5; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let (l, g) = nll_loss(&[1.0, 2.0, 3.0], 0).unwrap();
        let e = std::f64::consts::E;
        assert!((l - (-1.0 + (e + e * e + e * e * e).ln())).abs() < 1e-12);
        assert!((l - 2.4076).abs() < 1e-4);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(matches!(
            nll_loss(&[1.0, 2.0], 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn normalized_mse_extremes() {
        let (l, _) = normalized_mse(&[2.0, 0.0], &[5.0, 0.0]).unwrap();
        assert!(l.abs() < 1e-12);
        let (l, _) = normalized_mse(&[0.0, 3.0], &[5.0, 0.0]).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        let (l, _) = normalized_mse(&[-1.0, 0.0], &[5.0, 0.0]).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.0, 3.0, 1.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 1.0]), 0);
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 1..12)
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_scale_invariance(a in nonzero_vec(), c in 1e-3..1e3f64) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let neg: Vec<f64> = a.iter().map(|x| -x).collect();
            prop_assert!((cosine_similarity(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalized_mse_within_bounds(
            (p, z) in (1usize..10).prop_flat_map(|n| (
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(-5.0..5.0f64, n),
            ))
        ) {
            prop_assume!(norm(&p) > 1e-3 && norm(&z) > 1e-3);
            let (l, _) = normalized_mse(&p, &z).unwrap();
            prop_assert!((-1e-12..=4.0 + 1e-12).contains(&l));
        }
    }
}
