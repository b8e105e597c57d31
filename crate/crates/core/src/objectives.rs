//! Soft Dice loss for training and thresholded Dice score for evaluation.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_DICE_EPS: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_unit_range(t: &Tensor, what: &str) -> Result<()> {
    match t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::Domain(format!("{what} value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Records `1 - (2·Σ p·g + ε) / (Σ p² + Σ g² + ε)` over every voxel of the
/// batch and returns the scalar loss handle.
pub fn dice_loss(tape: &mut Tape, pred: Var, target: &Tensor, eps: f64) -> Result<Var> {
    let p = tape.value(pred);
    if p.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "dice_loss: prediction {:?} vs target {:?}",
            p.shape(),
            target.shape()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!(
            "dice epsilon must be > 0, got {eps}"
        )));
    }
    check_unit_range(p, "prediction")?;
    check_unit_range(target, "target")?;

    let target_sq: f64 = target.data().iter().map(|g| g * g).sum();
    let g = tape.leaf(target.clone());
    let pg = tape.mul(pred, g)?;
    let overlap = tape.sum(pg)?;
    let numerator = tape.scale(overlap, 2.0)?;
    let numerator = tape.add_scalar(numerator, eps)?;
    let pp = tape.mul(pred, pred)?;
    let pred_sq = tape.sum(pp)?;
    let denominator = tape.add_scalar(pred_sq, target_sq + eps)?;
    let ratio = tape.div(numerator, denominator)?;
    let neg = tape.scale(ratio, -1.0)?;
    tape.add_scalar(neg, 1.0)
}

/// Value-only convenience wrapper around [`dice_loss`].
pub fn dice_loss_value(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.leaf(pred.clone());
    let loss = dice_loss(&mut tape, p, target, eps)?;
    tape.value(loss).item()
}

/// Binarizes both masks at `threshold` (value ≥ threshold is foreground) and
/// returns `2|A∩B| / (|A|+|B|)`, or `1.0` when both are empty.
pub fn dice_score(pred: &Tensor, target: &Tensor, threshold: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "dice_score: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(target.data()) {
        let (pa, gb) = (p >= threshold, g >= threshold);
        a += pa as usize;
        b += gb as usize;
        both += (pa && gb) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn perfect_overlap_has_zero_loss() {
        let g = t(&[0.0, 0.3, 1.0, 0.8]);
        assert!(dice_loss_value(&g, &g, DEFAULT_DICE_EPS).unwrap() <= 1e-6);
    }

    #[test]
    fn disjoint_supports_have_unit_loss() {
        let g = t(&[1.0, 0.0, 1.0, 0.0]);
        let p = t(&[0.0, 1.0, 0.0, 1.0]);
        let loss = dice_loss_value(&p, &g, DEFAULT_DICE_EPS).unwrap();
        assert!((loss - 1.0).abs() < 1e-5);
    }

    #[test]
    fn half_prediction_on_half_foreground() {
        // Σpg = 2, Σp² = 2, Σg² = 4 → dice (4+ε)/(6+ε).
        let g = t(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = t(&[0.5; 8]);
        let eps = DEFAULT_DICE_EPS;
        let loss = dice_loss_value(&p, &g, eps).unwrap();
        assert!((loss - (1.0 - (4.0 + eps) / (6.0 + eps))).abs() < 1e-12);
        assert!((loss - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn loss_rejects_bad_inputs() {
        let g = t(&[1.0, 0.0]);
        assert!(matches!(
            dice_loss_value(&t(&[1.0, 0.0, 0.0]), &g, 1e-5),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            dice_loss_value(&t(&[1.5, 0.0]), &g, 1e-5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn score_examples() {
        // A: 4 voxels, B: 8 voxels, overlap 4.
        let mut a = vec![0.0; 10];
        let mut b = vec![0.0; 10];
        a[..4].fill(0.9);
        b[..8].fill(0.7);
        let s = dice_score(&t(&a), &t(&b), 0.5).unwrap();
        assert!((s - 8.0 / 12.0).abs() < 1e-12);

        assert_eq!(dice_score(&t(&b), &t(&b), 0.5).unwrap(), 1.0);
        assert_eq!(
            dice_score(&t(&[0.1, 0.2]), &t(&[0.0, 0.4]), 0.5).unwrap(),
            1.0
        );
        assert!(matches!(
            dice_score(&t(&[0.1]), &t(&[0.0, 0.4]), 0.5),
            Err(Error::Shape(_))
        ));
    }
}
