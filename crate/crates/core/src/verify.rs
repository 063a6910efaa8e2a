//! Finite-difference gradient checking.
//!
//! Each component is first estimated by a central difference. Components
//! that miss the tolerance are re-estimated by Ridders' extrapolation of
//! central differences over a shrinking step sequence before being reported.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub step: f64,
    /// Relative tolerance for components with `|g| > small`.
    pub rel_tol: f64,
    /// Absolute tolerance for components with `|g| <= small`.
    pub abs_tol: f64,
    pub small: f64,
    /// Initial step of the extrapolation fallback.
    pub ridders_step: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step: 1e-5, rel_tol: 1e-5, abs_tol: 1e-8, small: 1e-8, ridders_step: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub checked: usize,
    /// Components that needed the extrapolation fallback.
    pub refined: usize,
    /// Largest relative error among components above `small`.
    pub max_rel_error: f64,
    /// Largest absolute error among components at or below `small`.
    pub max_abs_error: f64,
    pub mismatches: Vec<FdMismatch>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn central_difference<F>(f: &F, x: &[f64], i: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p)?;
    p[i] = x[i] - h;
    let dn = f(&p)?;
    Ok((up - dn) / (2.0 * h))
}

/// Ridders' polynomial extrapolation of central differences to zero step.
/// Returns the estimate and its error estimate.
pub fn ridders<F>(f: &F, x: &[f64], i: usize, h0: f64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    const NTAB: usize = 10;
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const SAFE: f64 = 2.0;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = central_difference(f, x, i, h)?;
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for col in 1..NTAB {
        h /= CON;
        a[0][col] = central_difference(f, x, i, h)?;
        let mut fac = CON2;
        for row in 1..=col {
            a[row][col] = (a[row - 1][col] * fac - a[row - 1][col - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[row][col] - a[row - 1][col]).abs().max((a[row][col] - a[row - 1][col - 1]).abs());
            if e <= err {
                err = e;
                best = a[row][col];
            }
        }
        if (a[col][col] - a[col - 1][col - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok((best, err))
}

fn error_of(g: f64, fd: f64, cfg: &FdConfig) -> (bool, f64) {
    let diff = (g - fd).abs();
    if g.abs() > cfg.small {
        let rel = diff / g.abs();
        (rel <= cfg.rel_tol, rel)
    } else {
        (diff <= cfg.abs_tol, diff)
    }
}

/// Compares `grad` against numerical derivatives of `f` at `x`.
pub fn check_gradient<F>(f: &F, x: &[f64], grad: &[f64], cfg: &FdConfig) -> Result<FdReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut report = FdReport {
        checked: x.len(),
        refined: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        mismatches: Vec::new(),
    };
    for i in 0..x.len() {
        let g = grad[i];
        let mut fd = central_difference(f, x, i, cfg.step)?;
        let (mut ok, mut err) = error_of(g, fd, cfg);
        if !ok {
            report.refined += 1;
            let (est, _) = ridders(f, x, i, cfg.ridders_step)?;
            let (ok2, err2) = error_of(g, est, cfg);
            if err2 < err {
                fd = est;
                ok = ok2;
                err = err2;
            }
        }
        if g.abs() > cfg.small {
            report.max_rel_error = report.max_rel_error.max(err);
        } else {
            report.max_abs_error = report.max_abs_error.max(err);
        }
        if !ok {
            report.mismatches.push(FdMismatch { index: i, analytic: g, numeric: fd, error: err });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<f64> {
        Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
    }

    fn rosenbrock_grad(x: &[f64]) -> Vec<f64> {
        vec![
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ]
    }

    #[test]
    fn exact_gradient_passes() {
        let x = [-1.2, 1.0];
        let r = check_gradient(&rosenbrock, &x, &rosenbrock_grad(&x), &FdConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn sign_error_is_caught() {
        let x = [0.3, -0.7];
        let mut g = rosenbrock_grad(&x);
        g[1] = -g[1];
        let r = check_gradient(&rosenbrock, &x, &g, &FdConfig::default()).unwrap();
        assert_eq!(r.mismatches.len(), 1);
        assert_eq!(r.mismatches[0].index, 1);
    }

    #[test]
    fn ridders_is_accurate() {
        let f = |x: &[f64]| Ok(x[0].sin() * 1e3);
        let (d, err) = ridders(&f, &[0.4], 0, 0.1).unwrap();
        assert!((d - 1e3 * 0.4f64.cos()).abs() < 1e-9, "{err}");
    }
}
