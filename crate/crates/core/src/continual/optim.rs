use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::segnet::Param;

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_LR_STEP: usize = 50;
pub const DEFAULT_LR_GAMMA: f64 = 0.5;

/// Step decay: `base_lr · gamma^floor(epoch / step)`.
pub fn lr_schedule(epoch: usize, base_lr: f64, step: usize, gamma: f64) -> f64 {
    let step = step.max(1);
    base_lr * gamma.powi((epoch / step) as i32)
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` in place.
    ///
    /// Every gradient is checked before anything is modified, so a rejected
    /// step leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [Param], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient for {} has shape {:?}, parameter {:?}",
                    p.name,
                    g.shape(),
                    p.value.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter {}",
                    p.name
                )));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.value.len())
        {
            return Err(Error::Shape(
                "parameter layout changed between steps".into(),
            ));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *w *= decay;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            value: Tensor::new(vec![1], vec![v]).unwrap(),
        }]
    }

    fn grad(v: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn schedule_halves_every_step() {
        assert_eq!(lr_schedule(0, 1e-4, 50, 0.5), 1e-4);
        assert_eq!(lr_schedule(49, 1e-4, 50, 0.5), 1e-4);
        assert_eq!(lr_schedule(50, 1e-4, 50, 0.5), 5e-5);
        assert_eq!(lr_schedule(100, 1e-4, 50, 0.5), 2.5e-5);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar_param(0.7);
        let mut opt = AdamW::new(1e-4, 0.0);
        for _ in 0..5 {
            opt.step(&mut p, &grad(0.0)).unwrap();
        }
        assert_eq!(p[0].value.data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = lr / (1 + ε).
        let mut p = scalar_param(1.0);
        let mut opt = AdamW::new(1e-4, 0.0);
        opt.step(&mut p, &grad(1.0)).unwrap();
        let expected = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((p[0].value.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let mut p = scalar_param(2.0);
        let mut opt = AdamW::new(1e-3, 0.1);
        for _ in 0..3 {
            opt.step(&mut p, &grad(0.0)).unwrap();
        }
        let expected = 2.0 * (1.0 - 1e-3 * 0.1f64).powi(3);
        assert!((p[0].value.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar_param(1.0);
        let mut opt = AdamW::new(1e-4, 0.0);
        let err = opt.step(&mut p, &grad(f64::NAN)).unwrap_err();
        assert!(matches!(&err, Error::Training(m) if m.contains('w')));
        assert_eq!(p[0].value.data()[0], 1.0);
        assert_eq!(opt.steps_taken(), 0);
    }
}
