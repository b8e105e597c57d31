//! Central finite-difference verification of analytic gradients.

use rand::seq::index;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central difference step.
    pub step: f64,
    /// Coordinates sampled per parameter (all of them when the parameter is
    /// smaller).
    pub samples_per_param: usize,
    pub tolerance: f64,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            samples_per_param: 20,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks the gradients produced by `build` against finite differences.
///
/// `build` records a scalar loss on a fresh tape from the given parameter
/// handles; it is called once for the analytic pass and twice per sampled
/// coordinate.
pub fn check_gradients<F>(
    params: &[(String, Tensor)],
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("parameters require grad"))
        .collect();
    compare_gradients(params, &analytic, |values| evaluate(values, &build), opts)
}

fn evaluate<F>(values: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.value(loss).item()
}

/// Compares externally supplied analytic gradients to central differences
/// of `loss_at`. This is the comparison half of [`check_gradients`], exposed
/// so callers can audit gradients from any source.
pub fn compare_gradients<E>(
    params: &[(String, Tensor)],
    analytic: &[Tensor],
    mut loss_at: E,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    E: FnMut(&[Tensor]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut rng = rng::derived(opts.seed, Stream::GradCheck, 0);
    let mut report = Vec::with_capacity(params.len());
    for (p, (name, tensor)) in params.iter().enumerate() {
        if analytic[p].shape() != tensor.shape() {
            return Err(Error::Shape(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                analytic[p].shape(),
                tensor.shape()
            )));
        }
        let n = tensor.len();
        let picks = index::sample(&mut rng, n, opts.samples_per_param.min(n)).into_vec();
        let mut worst: f64 = 0.0;
        for &i in &picks {
            let original = values[p].data()[i];
            values[p].data_mut()[i] = original + opts.step;
            let plus = loss_at(&values)?;
            values[p].data_mut()[i] = original - opts.step;
            let minus = loss_at(&values)?;
            values[p].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = relative_error(analytic[p].data()[i], numeric, opts.abs_floor);
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
        report.push(ParamCheck {
            name: name.clone(),
            coordinates: picks.len(),
            max_rel_error: worst,
            passed: worst <= opts.tolerance,
        });
    }
    Ok(GradCheckReport { params: report })
}
