//! Sparse fitting with an `l0` penalty, `min D(C) + lambda * |C|_0`, solved by
//! a hybrid Newton method.
//!
//! Every iteration guesses a support from one proximal gradient step, takes
//! a Newton step on the stationary equation restricted to that support (or a
//! gradient step when the Newton step is rejected), and backtracks along it.
//! The iteration halts at a point whose support is stable and whose
//! stationary residual is below `tol`.
//!
//! The `l0` norm counts scalar entries: a coefficient row may keep some state
//! dimensions and drop others.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, SolverTag};
use crate::poly_model::Polynomial;
use crate::wls::{fit_ls_flat, restricted_covariance, smoothness_constants, FitWindow, WhitenedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    /// Armijo sufficient-decrease slope, in `(0, 1/2)`.
    pub sigma: f64,
    /// Backtracking factor, in `(0, 1)`.
    pub beta: f64,
    /// Newton acceptance margin; clamped below `min(1, l/2)` per problem.
    pub delta: f64,
    pub tau: f64,
    pub lambda: f64,
    pub max_iters: usize,
    /// Halting threshold on the stationary residual.
    pub tol: f64,
    /// Clamp `tau` to the bound under which the descent analysis holds.
    pub strict: bool,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { sigma: 5e-5, beta: 0.5, delta: 1e-10, tau: 1.0, lambda: 1.0, max_iters: 200, tol: 1e-6, strict: false }
    }
}

impl NewtonParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            return bad("sigma must lie in (0, 1/2)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.tau > 0.0) || !(self.lambda > 0.0) || !(self.tol > 0.0) {
            return bad("tau, lambda and tol must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Ok(())
    }
}

/// `2 a d b / (n L^2)` with `a = min{(1-2s)/(L/d - s), 2(1-s)d/L, 1}`.
pub fn tau_upper_bound(smoothness: f64, delta: f64, sigma: f64, beta: f64, n_coeffs: usize) -> f64 {
    let l = smoothness;
    let alpha = ((1.0 - 2.0 * sigma) / (l / delta - sigma)).min(2.0 * (1.0 - sigma) * delta / l).min(1.0);
    2.0 * alpha * delta * beta / (n_coeffs as f64 * l * l)
}

/// Sorted indices into the flattened coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet(pub Vec<usize>);

impl SupportSet {
    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.contains(*i)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn of_nonzeros(c: &DVector<f64>) -> Self {
        SupportSet(c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect())
    }

    pub fn is_superset_of(&self, other: &SupportSet) -> bool {
        other.0.iter().all(|i| self.contains(*i))
    }
}

/// Hard threshold at `sqrt(2 tau lambda)`; the tie goes to zero.
pub fn prox_l0(c: f64, tau: f64, lambda: f64) -> f64 {
    if c.abs() > (2.0 * tau * lambda).sqrt() {
        c
    } else {
        0.0
    }
}

/// Indices with `|c_i - tau * grad_i| >= sqrt(2 tau lambda)`.
pub fn support_of(c: &DVector<f64>, grad: &DVector<f64>, tau: f64, lambda: f64) -> SupportSet {
    let thr = (2.0 * tau * lambda).sqrt();
    SupportSet((0..c.len()).filter(|&i| (c[i] - tau * grad[i]).abs() >= thr).collect())
}

/// `[grad_T D(c); c_Tbar]`, zero exactly at solutions of the stationary equation.
pub fn stationary_residual(c: &DVector<f64>, support: &SupportSet, sys: &WhitenedSystem) -> DVector<f64> {
    let grad = sys.gradient(c);
    let off = support.complement(c.len());
    let mut out = DVector::zeros(c.len());
    for (k, &i) in support.0.iter().enumerate() {
        out[k] = grad[i];
    }
    for (k, &i) in off.iter().enumerate() {
        out[support.len() + k] = c[i];
    }
    out
}

/// Search direction on `support`, with `accepted == false` when the Newton
/// step was unsolvable or failed the descent test and the gradient step was
/// used instead.
pub fn newton_direction(
    c: &DVector<f64>,
    support: &SupportSet,
    sys: &WhitenedSystem,
    tau: f64,
    delta: f64,
) -> (DVector<f64>, bool) {
    let n = c.len();
    let off = support.complement(n);
    let grad = sys.gradient(c);
    let hess = sys.hessian();
    let mut s = DVector::zeros(n);
    let c_off = DVector::from_iterator(off.len(), off.iter().map(|&i| c[i]));
    for &i in &off {
        s[i] = -c[i];
    }
    let t = &support.0;
    let p_t = DVector::from_iterator(t.len(), t.iter().map(|&i| grad[i]));

    let newton = if t.is_empty() {
        Some(DVector::zeros(0))
    } else {
        let h_tt = hess.select_rows(t).select_columns(t);
        let h_to = hess.select_rows(t).select_columns(&off);
        let rhs = &h_to * &c_off - &p_t;
        h_tt.cholesky().map(|ch| ch.solve(&rhs))
    };
    if let Some(s_t) = newton {
        for (k, &i) in t.iter().enumerate() {
            s[i] = s_t[k];
        }
        let lhs = p_t.dot(&s_t);
        if lhs <= -delta * s.norm_squared() + c_off.norm_squared() / (4.0 * tau) {
            return (s, true);
        }
    }
    for (k, &i) in t.iter().enumerate() {
        s[i] = -p_t[k];
    }
    (s, false)
}

/// `C` is a fixed point of the proximal gradient map (ties accept both
/// branches). Kept entries must have `|grad_i| <= tol`.
pub fn check_tau_stationary(c: &DVector<f64>, tau: f64, lambda: f64, sys: &WhitenedSystem) -> bool {
    check_tau_stationary_tol(c, tau, lambda, sys, 1e-6)
}

pub fn check_tau_stationary_tol(c: &DVector<f64>, tau: f64, lambda: f64, sys: &WhitenedSystem, tol: f64) -> bool {
    let thr = (2.0 * tau * lambda).sqrt();
    let grad = sys.gradient(c);
    (0..c.len()).all(|i| {
        let v = c[i] - tau * grad[i];
        let tie = (v.abs() - thr).abs() <= 1e-12 * thr.max(1.0);
        if c[i] == 0.0 {
            v.abs() < thr || tie
        } else {
            grad[i].abs() <= tol && (v.abs() > thr || tie)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFloor {
    pub value: f64,
    /// Gradient at the origin vanished (all-zero data).
    pub degenerate: bool,
}

/// `min_i (tau/2) grad_i D(0)^2` over nonzero gradient entries.
pub fn lambda_floor(sys: &WhitenedSystem, tau: f64) -> LambdaFloor {
    let g0 = sys.gradient(&DVector::zeros(sys.n_coeffs()));
    let min = g0.iter().filter(|g| **g != 0.0).map(|g| 0.5 * tau * g * g).fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        LambdaFloor { value: min, degenerate: false }
    } else {
        LambdaFloor { value: 0.0, degenerate: true }
    }
}

/// Raw solver output on a whitened system.
#[derive(Debug, Clone)]
pub struct L0Outcome {
    pub coeffs: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Regularized cost of the initial point and of every iterate. Not
    /// monotone; an unconverged run returns the cheapest iterate.
    pub cost_history: Vec<f64>,
    pub newton_steps: usize,
    pub gradient_steps: usize,
    /// Final `tau`, below the configured one after a strict clamp or a stall.
    pub tau: f64,
    pub delta: f64,
    pub residual_norm: f64,
}

pub fn regularized_cost(sys: &WhitenedSystem, c: &DVector<f64>, lambda: f64) -> f64 {
    sys.cost(c) + lambda * c.iter().filter(|v| **v != 0.0).count() as f64
}

const TAU_PATIENCE: usize = 5;
const TAU_SHRINK: f64 = 0.1;

/// Runs the hybrid Newton iteration on a prepared system.
pub fn solve_l0(sys: &WhitenedSystem, params: &NewtonParams) -> Result<L0Outcome> {
    params.validate()?;
    let (smooth, convex) = smoothness_constants(sys);
    if !(convex > 1e-12 * smooth) {
        return Err(Error::InvalidParameter("data-fit cost is not strongly convex (l = 0)".into()));
    }
    let n = sys.n_coeffs();
    let lambda = params.lambda;
    let delta = params.delta.min(0.5 * convex).min(0.5);
    let mut tau = if params.strict {
        params.tau.min(tau_upper_bound(smooth, delta, params.sigma, params.beta, n))
    } else {
        params.tau
    };

    let ls = fit_ls_flat(sys)?;
    let mut c = ls.map(|v| prox_l0(v, tau, lambda));
    let mut cost = regularized_cost(sys, &c, lambda);
    let mut out = L0Outcome {
        coeffs: c.clone(),
        iterations: 0,
        converged: false,
        cost_history: vec![cost],
        newton_steps: 0,
        gradient_steps: 0,
        tau,
        delta,
        residual_norm: f64::INFINITY,
    };

    let mut best = (c.clone(), cost);
    let mut last_gain = 0;
    let mut prev_support: Option<SupportSet> = None;
    for iter in 0..params.max_iters {
        out.iterations = iter + 1;
        let grad = sys.gradient(&c);
        let support = support_of(&c, &grad, tau, lambda);
        out.residual_norm = stationary_residual(&c, &support, sys).norm();
        if prev_support.as_ref() == Some(&support)
            && support.is_superset_of(&SupportSet::of_nonzeros(&c))
            && out.residual_norm <= params.tol
        {
            out.converged = true;
            break;
        }

        let (dir, accepted) = newton_direction(&c, &support, sys, tau, delta);
        if accepted {
            out.newton_steps += 1;
        } else {
            out.gradient_steps += 1;
        }
        c = line_search(sys, &c, &grad, &support, &dir, params);
        cost = regularized_cost(sys, &c, lambda);
        out.cost_history.push(cost);
        if cost < best.1 {
            best = (c.clone(), cost);
            last_gain = iter;
        }
        // A tau far above 1/L can leave no fixed point to find, and the
        // support then cycles. Shrink it when the cost stalls and restart
        // from the cheapest iterate.
        if iter >= last_gain + TAU_PATIENCE {
            tau *= TAU_SHRINK;
            last_gain = iter;
            c = best.0.clone();
            prev_support = None;
            continue;
        }
        prev_support = Some(support);
    }
    out.coeffs = if out.converged { c } else { best.0 };
    out.tau = tau;
    Ok(out)
}

/// Armijo backtracking along `[c_T + a d_T; 0]`, measured against the
/// smooth cost at `c` with the slope of the full direction. The smallest
/// trial step is taken when no step passes.
fn line_search(
    sys: &WhitenedSystem,
    c: &DVector<f64>,
    grad: &DVector<f64>,
    support: &SupportSet,
    dir: &DVector<f64>,
    params: &NewtonParams,
) -> DVector<f64> {
    let f0 = sys.cost(c);
    let slope = grad.dot(dir);
    let mut cand = DVector::zeros(c.len());
    let mut rho = 1.0;
    for _ in 0..64 {
        for &i in &support.0 {
            cand[i] = c[i] + rho * dir[i];
        }
        if sys.cost(&cand) <= f0 + params.sigma * rho * slope {
            break;
        }
        rho *= params.beta;
    }
    cand
}

/// `l0`-regularized fit of a window up to order `max_order`.
pub fn fit_l0(window: &FitWindow, max_order: usize, params: &NewtonParams) -> Result<FitResult> {
    let sys = window.whitened_system(max_order)?;
    let outcome = solve_l0(&sys, params)?;
    let coeffs = sys.unflatten(&outcome.coeffs);
    let order = (0..coeffs.nrows()).rev().find(|&i| coeffs.row(i).iter().any(|v| *v != 0.0)).unwrap_or(0);
    let support = SupportSet::of_nonzeros(&outcome.coeffs);
    let data_error = sys.cost(&outcome.coeffs);
    let mut diagnostics = Vec::new();
    if !outcome.converged {
        diagnostics.push(format!(
            "no stationary point after {} iterations (residual {:.3e}); returning best iterate",
            outcome.iterations, outcome.residual_norm
        ));
    }
    if outcome.tau < params.tau {
        diagnostics.push(format!("tau reduced to {:.3e}", outcome.tau));
    }
    Ok(FitResult {
        poly: Polynomial::new(coeffs, window.time_origin, window.time_scale)?,
        order,
        data_error,
        total_cost: data_error + params.lambda * support.len() as f64,
        lambda: params.lambda,
        iterations: outcome.iterations,
        solver: SolverTag::L0Newton,
        converged: outcome.converged,
        covariance: restricted_covariance(&sys, &support.0),
        diagnostics,
    })
}

/// Exhaustive minimization over all supports; exponential, for testing only.
pub fn l0_brute_force(sys: &WhitenedSystem, lambda: f64) -> (DVector<f64>, f64) {
    let n = sys.n_coeffs();
    assert!(n <= 20, "brute force over {n} coefficients");
    let mut best = (DVector::zeros(n), regularized_cost(sys, &DVector::zeros(n), lambda));
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if let Some(c) = crate::wls::restricted_ls(sys, &support) {
            let cost = sys.cost(&c) + lambda * support.len() as f64;
            if cost < best.1 {
                best = (c, cost);
            }
        }
    }
    best
}
