//! Central finite-difference oracle for tape gradients.

use super::tape::{GradTape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Detailed outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

/// `|a − n| / (|a| + |n| + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

fn evaluate<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::no_grad();
    let vars: Vec<Var> = points.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(Error::Contract(format!("gradient check needs a scalar function, got {:?}", v.shape())));
    }
    Ok(v.item())
}

/// Max relative error between the tape gradient of the scalar `f` at `point`
/// and central differences with the given `step`.
pub fn finite_diff_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut GradTape, Var) -> Result<Var>,
{
    let multi = |t: &mut GradTape, v: &[Var]| f(t, v[0]);
    Ok(finite_diff_check_many(multi, std::slice::from_ref(point), step, None)?.max_rel_error)
}

/// Gradient check over several input tensors at once.
///
/// `max_coords` limits how many coordinates of each tensor are perturbed; the
/// checked coordinates are evenly strided through the flat buffer.
pub fn finite_diff_check_many<F>(
    f: F,
    points: &[Tensor],
    step: f64,
    max_coords: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::Contract(format!("finite-difference step {step} outside (0, 1e-2]")));
    }
    let first = evaluate(&f, points)?;
    let second = evaluate(&f, points)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::UnreliableOracle {
            point: 0,
            first,
            second,
        });
    }

    let mut tape = GradTape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coords_checked: 0,
    };
    let mut work: Vec<Tensor> = points.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).clone();
        let n = analytic.len();
        let stride = match max_coords {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for c in (0..n).step_by(stride) {
            let orig = work[ti].data()[c];
            work[ti].data_mut()[c] = orig + step;
            let plus = evaluate(&f, &work)?;
            work[ti].data_mut()[c] = orig - step;
            let minus = evaluate(&f, &work)?;
            work[ti].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic.data()[c], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (ti, c);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_nearly_exact() {
        let err = finite_diff_check(|t, x| Ok(t.mul(x, x)), &Tensor::scalar(3.0), 1e-5).unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::scalar(0.0));
        let y = t.sigmoid(x);
        let g = t.backward(y).unwrap();
        assert!((g.wrt(x).item() - 0.25).abs() < 1e-6);
        let err = finite_diff_check(|t, x| Ok(t.sigmoid(x)), &Tensor::scalar(0.0), 1e-5).unwrap();
        assert!(err < 1e-8);
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        let counter = Cell::new(0.0);
        let f = |t: &mut GradTape, x: Var| {
            counter.set(counter.get() + 1.0);
            let c = t.constant(Tensor::scalar(counter.get()));
            Ok(t.mul(x, c))
        };
        let err = finite_diff_check(f, &Tensor::scalar(1.0), 1e-5).unwrap_err();
        assert!(matches!(err, Error::UnreliableOracle { .. }));
    }

    #[test]
    fn step_out_of_range() {
        let f = |t: &mut GradTape, x: Var| Ok(t.mul(x, x));
        assert!(finite_diff_check(f, &Tensor::scalar(1.0), 0.1).is_err());
        assert!(finite_diff_check(f, &Tensor::scalar(1.0), 0.0).is_err());
    }
}
