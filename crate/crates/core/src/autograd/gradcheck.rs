//! Central finite-difference verification of tape gradients.

use super::{Precision, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{numel, GridTensor};

/// Compares the tape gradient of a scalar function `f` at `x` against
/// central differences with step `eps`.
///
/// Returns `max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8)`.
/// `f` receives a fresh double-precision tape and the leaf holding `x`.
pub fn grad_check<F>(f: F, x: &GridTensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::with_precision(Precision::F64);
    let leaf = tape.param(x.clone());
    let loss = f(&mut tape, leaf)?;
    if numel(tape.shape(loss)) != 1 {
        return Err(Error::NotScalar(tape.shape(loss)));
    }
    tape.backward(loss)?;
    let analytic = tape
        .take_grad(leaf)
        .unwrap_or_else(|| GridTensor::zeros(x.shape()));

    let eval = |probe: &GridTensor| -> Result<f64> {
        let mut t = Tape::with_precision(Precision::F64);
        let v = t.constant(probe.clone());
        let out = f(&mut t, v)?;
        Ok(t.value(out).data()[0])
    };

    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
