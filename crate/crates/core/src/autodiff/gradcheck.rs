//! Central-difference gradient checking.
//!
//! The numeric side only ever runs forward passes on fresh tapes, so it
//! stays independent of the backward rules it is checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative-error floor in the denominator. Central differences at step
/// 1e-5 carry roughly 1e-11 of rounding error, so smaller gradients are
/// compared in absolute terms.
const FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    v.item()
        .ok_or_else(|| Error::NonScalarLoss(v.shape().to_vec()))
}

fn analytic<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect())
}

fn check_coords<F>(f: &F, inputs: &[Tensor], step: f64, coords: &[(usize, usize)]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let grads = analytic(f, inputs)?;
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for &(ti, ci) in coords {
        let orig = inputs[ti].data()[ci];
        probe[ti].data_mut()[ci] = orig + step;
        let plus = eval_scalar(f, &probe)?;
        probe[ti].data_mut()[ci] = orig - step;
        let minus = eval_scalar(f, &probe)?;
        probe[ti].data_mut()[ci] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(grads[ti].data()[ci], numeric));
    }
    Ok(worst)
}

/// Maximum relative error between analytic and central-difference
/// gradients of a scalar function of one tensor.
pub fn gradient_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    gradient_check_many(
        |tape: &mut Tape, vars: &[Var]| f(tape, vars[0]),
        std::slice::from_ref(x),
        step,
    )
}

/// Like [`gradient_check`] over every coordinate of several inputs.
pub fn gradient_check_many<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |ci| (ti, ci)))
        .collect();
    check_coords(&f, inputs, step, &coords)
}

/// Checks up to `per_input` randomly chosen coordinates of every input.
/// Inputs with fewer coordinates are checked exhaustively.
pub fn gradient_check_sampled<F>(
    f: F,
    inputs: &[Tensor],
    step: f64,
    per_input: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for (ti, t) in inputs.iter().enumerate() {
        if t.len() <= per_input {
            coords.extend((0..t.len()).map(|ci| (ti, ci)));
        } else {
            let mut picked = sample(&mut rng, t.len(), per_input).into_vec();
            picked.sort_unstable();
            coords.extend(picked.into_iter().map(|ci| (ti, ci)));
        }
    }
    check_coords(&f, inputs, step, &coords)
}
