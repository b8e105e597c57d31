use proptest::prelude::*;

use clseg::autodiff::Tensor;
use clseg::objectives::{dice_loss_value, dice_score, DEFAULT_DICE_EPS};

fn t(v: Vec<f64>) -> Tensor {
    Tensor::new(vec![v.len()], v).unwrap()
}

/// Independent Dice loss: direct transcription of the formula.
fn oracle_loss(p: &[f64], g: &[f64], eps: f64) -> f64 {
    let pg: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let gg: f64 = g.iter().map(|b| b * b).sum();
    1.0 - (2.0 * pg + eps) / (pp + gg + eps)
}

#[test]
fn matches_hand_derived_examples() {
    let g = t(vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let p = t(vec![0.5; 8]);
    let loss = dice_loss_value(&p, &g, DEFAULT_DICE_EPS).unwrap();
    assert!((loss - 1.0 / 3.0).abs() < 1e-5);

    let a = t((0..12).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect());
    let b = t((0..12).map(|i| if i < 8 { 1.0 } else { 0.0 }).collect());
    assert!((dice_score(&a, &b, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #[test]
    fn loss_matches_oracle_and_stays_in_range(p in unit_vec(16), g in unit_vec(16)) {
        let loss = dice_loss_value(&t(p.clone()), &t(g.clone()), DEFAULT_DICE_EPS).unwrap();
        prop_assert!((loss - oracle_loss(&p, &g, DEFAULT_DICE_EPS)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&loss));
    }

    #[test]
    fn score_is_symmetric_and_in_range(p in unit_vec(20), g in unit_vec(20), th in 0.05f64..0.95) {
        let a = dice_score(&t(p.clone()), &t(g.clone()), th).unwrap();
        let b = dice_score(&t(g), &t(p), th).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn raising_prediction_on_foreground_never_raises_loss(
        p in unit_vec(12),
        g in prop::collection::vec(prop::bool::ANY, 12),
        idx in 0usize..12,
        bump in 0.0f64..1.0,
    ) {
        let g: Vec<f64> = g.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        prop_assume!(g[idx] == 1.0);
        let mut q = p.clone();
        q[idx] = (p[idx] + bump).min(1.0);
        let before = dice_loss_value(&t(p), &t(g.clone()), DEFAULT_DICE_EPS).unwrap();
        let after = dice_loss_value(&t(q), &t(g), DEFAULT_DICE_EPS).unwrap();
        prop_assert!(after <= before + 1e-12);
    }
}
