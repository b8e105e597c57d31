use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Number of training items for `n` items at `ratio`: `round(ratio · n)`,
/// clamped so both sides keep at least one item.
pub fn train_count(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Config(format!(
            "cannot split {n} item(s) into non-empty train and test sides"
        )));
    }
    Ok(((ratio * n as f64).round() as usize).clamp(1, n - 1))
}

/// Seeded shuffled split. Both sides keep the items' original relative
/// order; only membership is random.
pub fn split_domain<T>(items: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let n_train = train_count(items.len(), ratio)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut is_train = vec![false; items.len()];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::new());
    for (item, t) in items.into_iter().zip(is_train) {
        if t {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}
