//! Newton–Krylov solves of u − T_τ(u) = 0.

use serde::{Deserialize, Serialize};

use super::spectrum::{dt_spectrum, IndexReport, SpectrumOptions};
use crate::domain::{Field, Point};
use crate::error::{invalid, Error, Result};
use crate::functional::{grad_i, h_inner, h_norm, WeightH};
use crate::linalg::gmres;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Accept when ‖u − T(u)‖ < rel_tol·(1 + ‖u‖).
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max: usize,
    pub spectrum: SpectrumOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            rel_tol: 1e-9,
            max_iterations: 60,
            gmres_tol: 1e-4,
            gmres_restart: 60,
            gmres_max: 600,
            spectrum: SpectrumOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationRecord {
    pub tau: f64,
    #[serde(skip)]
    pub u: Field,
    pub residual: f64,
    /// (−1)^unstable_count, 0 when degenerate.
    pub index: i8,
    pub unstable_count: usize,
    pub h_norm: f64,
    pub sup_norm: f64,
    /// Where u is largest.
    pub argmax: Point,
    pub newton_iterations: usize,
    pub spectrum: IndexReport,
}

/// Residual u − T_τ(u) + shift.
fn residual(u: &Field, tau: f64, h: &WeightH, shift: Option<&Field>) -> Result<Field> {
    let g = grad_i(u, tau, h)?;
    Ok(match shift {
        Some(s) => g.add(s),
        None => g,
    })
}

/// Damped Newton iteration on u − T_τ(u) + shift = 0 with matrix-free GMRES
/// in the energy inner product. Jacobian actions are central differences.
pub(crate) fn newton_core(
    tau: f64,
    u_init: &Field,
    h: &WeightH,
    shift: Option<&Field>,
    opts: &NewtonOptions,
) -> Result<(Field, f64, usize)> {
    let mut u = u_init.zero_boundary();
    let mut f = residual(&u, tau, h, shift)?;
    let mut rn = h_norm(&f)?;
    for it in 0..=opts.max_iterations {
        let un = h_norm(&u)?;
        if !rn.is_finite() {
            break;
        }
        if rn < opts.rel_tol * (1.0 + un) {
            return Ok((u, rn, it));
        }
        if it == opts.max_iterations {
            break;
        }
        let base = u.clone();
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            let vf = base.with_values(v.to_vec());
            let vn = h_norm(&vf)?;
            if vn == 0.0 {
                return Ok(vec![0.0; v.len()]);
            }
            let eps = 1e-6 * (1.0 + un) / vn;
            let fp = residual(&base.axpy(eps, &vf), tau, h, shift)?;
            let fm = residual(&base.axpy(-eps, &vf), tau, h, shift)?;
            Ok(fp.values.iter().zip(&fm.values).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
        };
        let inner = |a: &[f64], b: &[f64]| -> f64 {
            h_inner(&base.with_values(a.to_vec()), &base.with_values(b.to_vec())).unwrap_or(f64::NAN)
        };
        let rhs: Vec<f64> = f.values.iter().map(|v| -v).collect();
        let lin = gmres(apply, inner, &rhs, opts.gmres_tol, opts.gmres_restart, opts.gmres_max)?;
        let d = u.with_values(lin.x);
        // backtracking on the residual norm
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-4 {
            let trial = u.axpy(step, &d);
            if let Ok(ft) = residual(&trial, tau, h, shift) {
                let tn = h_norm(&ft)?;
                if tn.is_finite() && tn <= (1.0 - 1e-4 * step) * rn {
                    u = trial;
                    f = ft;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence(format!("Newton stalled at residual {rn:.3e} (tau = {tau})")))
}

pub fn newton_solve(tau: f64, u_init: &Field, h: &WeightH, opts: &NewtonOptions) -> Result<ContinuationRecord> {
    if !(tau > 0.0) {
        return invalid("tau must be positive");
    }
    let (u, residual, iterations) = newton_core(tau, u_init, h, None, opts)?;
    record(tau, u, residual, iterations, h, &opts.spectrum)
}

pub(crate) fn record(
    tau: f64,
    u: Field,
    residual: f64,
    newton_iterations: usize,
    h: &WeightH,
    spectrum: &SpectrumOptions,
) -> Result<ContinuationRecord> {
    let spec = dt_spectrum(&u, tau, h, spectrum)?;
    let (j, sup_norm) =
        u.values.iter().enumerate().fold(
            (0, 0.0f64),
            |(bj, bv), (j, v)| {
                if v.abs() > bv {
                    (j, v.abs())
                } else {
                    (bj, bv)
                }
            },
        );
    Ok(ContinuationRecord {
        tau,
        residual,
        index: spec.index,
        unstable_count: spec.unstable_count,
        h_norm: h_norm(&u)?,
        sup_norm,
        argmax: u.mesh.position(j),
        newton_iterations,
        spectrum: spec,
        u,
    })
}
