//! Central finite-difference verification of tape gradients.

use super::{Matrix, Param, Tape, Tensor};
use crate::error::Result;

/// Relative error used throughout: `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn scalar(tape: &Tape, t: Tensor) -> f64 {
    tape.value(t)[(0, 0)]
}

/// Compares the tape gradient of scalar `f` at `x` against central
/// differences with step `h`, returning the largest relative error.
pub fn finite_diff_check<F>(f: F, x: &Matrix, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Tensor) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let xt = tape.leaf(x.clone(), true);
    let out = f(&mut tape, xt)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xt)
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));

    let eval = |probe: Matrix| -> Result<f64> {
        let mut tape = Tape::new();
        let xt = tape.leaf(probe, false);
        let out = f(&mut tape, xt)?;
        Ok(scalar(&tape, out))
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = eval(probe.clone())?;
        probe.as_mut_slice()[k] = orig - h;
        let down = eval(probe.clone())?;
        probe.as_mut_slice()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.as_slice()[k], numeric));
    }
    Ok(worst)
}

/// Same check as [`finite_diff_check`], but over every entry of every
/// non-frozen parameter read by `f`.
pub fn param_grad_check<F>(params: &[Param], f: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Tensor>,
{
    for p in params {
        p.zero_grad();
    }
    let mut tape = Tape::new();
    let out = f(&mut tape)?;
    tape.backward(out)?;
    let analytic: Vec<Option<Matrix>> = params.iter().map(|p| p.take_grad()).collect();

    let eval = || -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape)?;
        Ok(scalar(&tape, out))
    };

    let mut worst = 0.0f64;
    for (p, grad) in params.iter().zip(&analytic) {
        if p.is_frozen() {
            continue;
        }
        let n = p.value().as_slice().len();
        for k in 0..n {
            let orig = p.value().as_slice()[k];
            p.value_mut().as_mut_slice()[k] = orig + h;
            let up = eval()?;
            p.value_mut().as_mut_slice()[k] = orig - h;
            let down = eval()?;
            p.value_mut().as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.as_ref().map_or(0.0, |g| g.as_slice()[k]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}
