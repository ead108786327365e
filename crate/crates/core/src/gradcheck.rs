//! Central finite differences as an independent oracle for analytic gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default probe step for 64-bit central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub op: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_index: usize,
    /// `(channel, row, col)` of that entry.
    pub worst_coord: (usize, usize, usize),
    pub tolerance: f64,
    pub checked: usize,
    pub passed: bool,
}

/// `(f(x + h·e) − f(x − h·e)) / 2h` for every element of `x`.
pub fn finite_difference<F>(f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> f64 + Sync,
{
    finite_difference_masked(f, x, h, |_| true)
}

/// Like [`finite_difference`], probing only elements where `probe(index)`
/// holds; the rest are left at zero.
pub fn finite_difference_masked<F, P>(f: F, x: &Tensor, h: f64, probe: P) -> Result<Tensor>
where
    F: Fn(&Tensor) -> f64 + Sync,
    P: Fn(usize) -> bool + Sync,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step must be > 0, got {h}")));
    }
    let (c, hh, w) = x.shape();
    let grads: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|idx| {
            if !probe(idx) {
                return Ok(0.0);
            }
            let mut probe_x = x.clone();
            let base = x.as_slice()[idx];
            probe_x.as_mut_slice()[idx] = base + h;
            let plus = f(&probe_x);
            probe_x.as_mut_slice()[idx] = base - h;
            let minus = f(&probe_x);
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::OracleFailure(format!(
                    "non-finite evaluation while probing element {idx}"
                )));
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    Tensor::new(c, hh, w, grads).map_err(|e| Error::OracleFailure(e.to_string()))
}

/// `Σ a·b` with Neumaier compensation. Finite-difference losses built on it
/// keep summation roundoff well below the probe signal.
pub fn compensated_dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let term = x * y;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    Ok(sum + comp)
}

/// Elementwise comparison with `rel = |a − n| / max(|a|, |n|, 1e-12)`.
pub fn check(op_name: &str, analytic: &Tensor, numeric: &Tensor, tol: f64) -> Result<GradReport> {
    check_masked(op_name, analytic, numeric, tol, |_| true)
}

pub fn check_masked<P>(
    op_name: &str,
    analytic: &Tensor,
    numeric: &Tensor,
    tol: f64,
    include: P,
) -> Result<GradReport>
where
    P: Fn(usize) -> bool,
{
    if analytic.shape() != numeric.shape() {
        return Err(Error::shape(analytic.shape(), numeric.shape()));
    }
    let (mut max_abs, mut max_rel, mut worst, mut checked) = (0.0f64, 0.0f64, 0usize, 0usize);
    for (idx, (&a, &n)) in analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .enumerate()
    {
        if !include(idx) {
            continue;
        }
        checked += 1;
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-12);
        max_abs = max_abs.max(abs);
        if rel > max_rel {
            max_rel = rel;
            worst = idx;
        }
    }
    let (_, h, w) = analytic.shape();
    let plane = (h * w).max(1);
    let width = w.max(1);
    Ok(GradReport {
        op: op_name.to_string(),
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        worst_index: worst,
        worst_coord: (worst / plane, (worst % plane) / width, worst % width),
        tolerance: tol,
        checked,
        passed: max_rel < tol,
    })
}
