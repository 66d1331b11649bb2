//! `l1`-regularized fitting, `min D(C) + lambda * |C|_1`, by ADMM in scaled
//! form. Used as the convex baseline against the `l0` solver.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, SolverTag};
use crate::poly_model::Polynomial;
use crate::wls::{restricted_covariance, FitWindow, WhitenedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self { rho: 1.0, lambda: 1.0, max_iters: 5000, abs_tol: 1e-9, rel_tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// The sparse (`z`) iterate.
    pub coeffs: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

pub fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

pub fn l1_cost(sys: &WhitenedSystem, c: &DVector<f64>, lambda: f64) -> f64 {
    sys.cost(c) + lambda * c.lp_norm(1)
}

pub fn solve_l1_admm(sys: &WhitenedSystem, params: &AdmmParams) -> Result<AdmmOutcome> {
    if !(params.rho > 0.0) || !(params.lambda >= 0.0) || params.max_iters == 0 {
        return Err(Error::InvalidParameter("ADMM needs rho > 0, lambda >= 0 and max_iters >= 1".into()));
    }
    let n = sys.n_coeffs();
    let rho = params.rho;
    let mut a = sys.hessian();
    for i in 0..n {
        a[(i, i)] += rho;
    }
    let chol = a.cholesky().ok_or(Error::NotPositiveDefinite("ADMM system"))?;
    let zty2 = sys.design.tr_mul(&sys.target) * 2.0;
    let kappa = params.lambda / rho;

    let mut x = DVector::zeros(n);
    let mut z = DVector::<f64>::zeros(n);
    let mut u = DVector::<f64>::zeros(n);
    let sqrt_n = (n as f64).sqrt();
    let mut out =
        AdmmOutcome { coeffs: z.clone(), iterations: 0, converged: false, primal_residual: 0.0, dual_residual: 0.0 };
    for iter in 0..params.max_iters {
        out.iterations = iter + 1;
        x = chol.solve(&(&zty2 + (&z - &u) * rho));
        let z_old = std::mem::replace(&mut z, (&x + &u).map(|v| soft_threshold(v, kappa)));
        u += &x - &z;
        out.primal_residual = (&x - &z).norm();
        out.dual_residual = rho * (&z - &z_old).norm();
        let eps_pri = sqrt_n * params.abs_tol + params.rel_tol * x.norm().max(z.norm());
        let eps_dual = sqrt_n * params.abs_tol + params.rel_tol * rho * u.norm();
        if out.primal_residual <= eps_pri && out.dual_residual <= eps_dual {
            out.converged = true;
            break;
        }
    }
    let _ = x;
    out.coeffs = z;
    Ok(out)
}

pub fn fit_l1_admm(window: &FitWindow, max_order: usize, params: &AdmmParams) -> Result<FitResult> {
    let sys = window.whitened_system(max_order)?;
    let out = solve_l1_admm(&sys, params)?;
    let coeffs = sys.unflatten(&out.coeffs);
    let order = (0..coeffs.nrows()).rev().find(|&i| coeffs.row(i).iter().any(|v| *v != 0.0)).unwrap_or(0);
    let support: Vec<usize> = (0..out.coeffs.len()).filter(|&i| out.coeffs[i] != 0.0).collect();
    let data_error = sys.cost(&out.coeffs);
    let mut diagnostics = Vec::new();
    if !out.converged {
        diagnostics.push(format!(
            "ADMM stopped after {} iterations (primal {:.3e}, dual {:.3e})",
            out.iterations, out.primal_residual, out.dual_residual
        ));
    }
    Ok(FitResult {
        poly: Polynomial::new(coeffs, window.time_origin, window.time_scale)?,
        order,
        data_error,
        total_cost: data_error + params.lambda * out.coeffs.lp_norm(1),
        lambda: params.lambda,
        iterations: out.iterations,
        solver: SolverTag::L1Admm,
        converged: out.converged,
        covariance: restricted_covariance(&sys, &support),
        diagnostics,
    })
}
