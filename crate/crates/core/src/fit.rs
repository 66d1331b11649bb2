//! Fit results and solver dispatch.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l0::{fit_l0, NewtonParams};
use crate::l1::{fit_l1_admm, AdmmParams};
use crate::orls::{fit_order_limited, lambda_bounds};
use crate::poly_model::Polynomial;
use crate::wls::{fit_ls, restricted_covariance, FitWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverTag {
    FixedOrder,
    Orls,
    L0Newton,
    L1Admm,
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverTag::FixedOrder => "fixed",
            SolverTag::Orls => "orls",
            SolverTag::L0Newton => "l0",
            SolverTag::L1Admm => "l1",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub poly: Polynomial,
    /// Selected order for ORLS and fixed fits; highest order with a nonzero
    /// coefficient for the sparse solvers.
    pub order: usize,
    pub data_error: f64,
    /// `data_error + lambda * penalty`, with the penalty of the solver.
    pub total_cost: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub solver: SolverTag,
    pub converged: bool,
    /// Covariance of the flattened coefficients (zero off the support).
    pub covariance: Option<DMatrix<f64>>,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn nonzeros(&self) -> usize {
        self.poly.coeffs().iter().filter(|c| **c != 0.0).count()
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "solver      {}", self.solver)?;
        writeln!(f, "order       {}", self.order)?;
        writeln!(f, "data error  {:.6e}", self.data_error)?;
        writeln!(f, "total cost  {:.6e}", self.total_cost)?;
        writeln!(f, "lambda      {:.6e}", self.lambda)?;
        writeln!(f, "iterations  {}", self.iterations)?;
        writeln!(f, "converged   {}", self.converged)?;
        writeln!(f, "origin      {}  scale {}", self.poly.time_origin(), self.poly.time_scale())?;
        for (i, row) in self.poly.coeffs().row_iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(f, "c{i:<10} {}", vals.join("  "))?;
        }
        for d in &self.diagnostics {
            writeln!(f, "note        {d}")?;
        }
        Ok(())
    }
}

/// Plain least squares at a fixed order, clamped to what the window can
/// identify.
pub fn fit_fixed_order(window: &FitWindow, order: usize) -> Result<FitResult> {
    let mut diagnostics = Vec::new();
    let usable = order.min(window.max_identifiable_order());
    if usable < order {
        diagnostics.push(format!("order clamped from {order} to {usable} for a {}-step window", window.len()));
    }
    let sys = window.whitened_system(usable)?;
    let coeffs = fit_ls(&sys)?;
    let data_error = crate::wls::data_fit_error(&coeffs, &sys);
    let support: Vec<usize> = (0..sys.n_coeffs()).collect();
    Ok(FitResult {
        poly: Polynomial::new(coeffs, window.time_origin, window.time_scale)?,
        order: usable,
        data_error,
        total_cost: data_error,
        lambda: 0.0,
        iterations: 1,
        solver: SolverTag::FixedOrder,
        converged: true,
        covariance: restricted_covariance(&sys, &support),
        diagnostics,
    })
}

/// Plain LS fit used while a window is too short for order selection.
fn short_window_fit(window: &FitWindow, order: usize, tag: SolverTag) -> Result<FitResult> {
    let mut r = fit_fixed_order(window, order)?;
    r.solver = tag;
    Ok(r)
}

/// How the regularization weight is chosen for each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// Geometric mean of the ORLS interval `(D1/(T-2), D1]`, i.e. `D1/sqrt(T-2)`.
    GeometricMean,
}

/// Weight used when the data leave no room for a data-driven choice.
pub const DEGENERATE_LAMBDA: f64 = 1e-9;

impl LambdaPolicy {
    pub fn resolve(&self, window: &FitWindow) -> Result<f64> {
        match *self {
            LambdaPolicy::Fixed(l) if l > 0.0 && l.is_finite() => Ok(l),
            LambdaPolicy::Fixed(l) => Err(Error::InvalidParameter(format!("lambda must be positive, got {l}"))),
            LambdaPolicy::GeometricMean => {
                if window.len() < 3 {
                    return Ok(1.0);
                }
                let (lo, hi) = lambda_bounds(window)?;
                let l = (lo * hi).sqrt();
                Ok(if l > 0.0 { l } else { DEGENERATE_LAMBDA })
            }
        }
    }
}

/// Solver choice for tracking runs and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solver {
    FixedOrder(usize),
    Orls(LambdaPolicy),
    L0Newton { max_order: usize, lambda: LambdaPolicy, params: NewtonParams },
    L1Admm { max_order: usize, lambda: LambdaPolicy, params: AdmmParams },
}

impl Solver {
    pub fn tag(&self) -> SolverTag {
        match self {
            Solver::FixedOrder(_) => SolverTag::FixedOrder,
            Solver::Orls(_) => SolverTag::Orls,
            Solver::L0Newton { .. } => SolverTag::L0Newton,
            Solver::L1Admm { .. } => SolverTag::L1Admm,
        }
    }

    /// Row label used in reports.
    pub fn label(&self) -> String {
        match self {
            Solver::FixedOrder(g) => format!("fixed-{g}"),
            Solver::Orls(_) => "orls".into(),
            Solver::L0Newton { .. } => "l0-newton".into(),
            Solver::L1Admm { .. } => "l1-admm".into(),
        }
    }

    pub fn fit(&self, window: &FitWindow) -> Result<FitResult> {
        match self {
            Solver::FixedOrder(g) => fit_fixed_order(window, *g),
            Solver::Orls(policy) => {
                if window.len() < 3 {
                    return short_window_fit(window, 1, SolverTag::Orls);
                }
                fit_order_limited(window, policy.resolve(window)?)
            }
            Solver::L0Newton { max_order, lambda, params } => {
                if window.len() < 3 {
                    return short_window_fit(window, (*max_order).min(1), SolverTag::L0Newton);
                }
                let order = (*max_order).min(window.max_identifiable_order()).min(window.len() - 2);
                if order == 0 {
                    return short_window_fit(window, 0, SolverTag::L0Newton);
                }
                let params = NewtonParams { lambda: lambda.resolve(window)?, ..params.clone() };
                fit_l0(window, order, &params)
            }
            Solver::L1Admm { max_order, lambda, params } => {
                if window.len() < 3 {
                    return short_window_fit(window, (*max_order).min(1), SolverTag::L1Admm);
                }
                let order = (*max_order).min(window.max_identifiable_order()).min(window.len() - 2);
                if order == 0 {
                    return short_window_fit(window, 0, SolverTag::L1Admm);
                }
                let params = AdmmParams { lambda: lambda.resolve(window)?, ..params.clone() };
                fit_l1_admm(window, order, &params)
            }
        }
    }

    /// Parses `name[:key=value,...]`, e.g. `fixed:2`, `orls:lambda=3`,
    /// `l0:order=3,tau=1`, `l1:order=3,rho=1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut kv = Vec::new();
        let mut bare = None;
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => {
                    let v: f64 =
                        v.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad number in `{part}`")))?;
                    kv.push((k.trim().to_string(), v));
                }
                None => bare = Some(part.trim().to_string()),
            }
        }
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
        let lambda = get("lambda").map(LambdaPolicy::Fixed).unwrap_or(LambdaPolicy::GeometricMean);
        let order = |default: usize| -> Result<usize> {
            match (get("order"), &bare) {
                (Some(v), _) => Ok(v as usize),
                (None, Some(b)) => b.parse().map_err(|_| Error::InvalidParameter(format!("bad order `{b}`"))),
                (None, None) => Ok(default),
            }
        };
        let known = |allowed: &[&str]| -> Result<()> {
            match kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::InvalidParameter(format!("unknown key `{k}` for solver `{name}`"))),
                None => Ok(()),
            }
        };
        match name {
            "fixed" => {
                known(&["order"])?;
                Ok(Solver::FixedOrder(order(1)?))
            }
            "orls" => {
                known(&["lambda"])?;
                Ok(Solver::Orls(lambda))
            }
            "l0" | "l0-newton" => {
                known(&["order", "lambda", "sigma", "beta", "delta", "tau", "iters", "tol"])?;
                let mut p = NewtonParams::default();
                if let Some(v) = get("sigma") {
                    p.sigma = v;
                }
                if let Some(v) = get("beta") {
                    p.beta = v;
                }
                if let Some(v) = get("delta") {
                    p.delta = v;
                }
                if let Some(v) = get("tau") {
                    p.tau = v;
                }
                if let Some(v) = get("iters") {
                    p.max_iters = v as usize;
                }
                if let Some(v) = get("tol") {
                    p.tol = v;
                }
                Ok(Solver::L0Newton { max_order: order(3)?, lambda, params: p })
            }
            "l1" | "l1-admm" => {
                known(&["order", "lambda", "rho", "iters", "abs_tol", "rel_tol"])?;
                let mut p = AdmmParams::default();
                if let Some(v) = get("rho") {
                    p.rho = v;
                }
                if let Some(v) = get("iters") {
                    p.max_iters = v as usize;
                }
                if let Some(v) = get("abs_tol") {
                    p.abs_tol = v;
                }
                if let Some(v) = get("rel_tol") {
                    p.rel_tol = v;
                }
                Ok(Solver::L1Admm { max_order: order(3)?, lambda, params: p })
            }
            other => Err(Error::InvalidParameter(format!("unknown solver `{other}`"))),
        }
    }

    /// The five estimators compared in the reference experiments.
    pub fn reference_set() -> Vec<Solver> {
        vec![
            Solver::FixedOrder(1),
            Solver::FixedOrder(2),
            Solver::L1Admm { max_order: 3, lambda: LambdaPolicy::GeometricMean, params: AdmmParams::default() },
            Solver::Orls(LambdaPolicy::GeometricMean),
            Solver::L0Newton { max_order: 3, lambda: LambdaPolicy::GeometricMean, params: NewtonParams::default() },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wls::Variance;

    #[test]
    fn parse_solver_specs() {
        assert_eq!(Solver::parse("fixed:2").unwrap(), Solver::FixedOrder(2));
        assert_eq!(Solver::parse("fixed").unwrap(), Solver::FixedOrder(1));
        assert_eq!(Solver::parse("orls:lambda=3").unwrap(), Solver::Orls(LambdaPolicy::Fixed(3.0)));
        match Solver::parse("l0:order=4,tau=0.5").unwrap() {
            Solver::L0Newton { max_order, params, .. } => {
                assert_eq!(max_order, 4);
                assert_eq!(params.tau, 0.5);
                assert_eq!(params.sigma, 5e-5);
            }
            other => panic!("{other:?}"),
        }
        assert!(Solver::parse("l1:bogus=1").is_err());
        assert!(Solver::parse("kalman").is_err());
    }

    #[test]
    fn fixed_order_clamps_short_windows() {
        let w = FitWindow::new(
            vec![0.0, 1.0],
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            Variance::Isotropic(1.0),
            1.0,
        )
        .unwrap();
        let r = fit_fixed_order(&w, 2).unwrap();
        assert_eq!(r.order, 1);
        assert_eq!(r.diagnostics.len(), 1);
    }
}
