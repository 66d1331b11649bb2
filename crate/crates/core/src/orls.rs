//! Order-limited fitting: grid search over the polynomial order with
//! order-recursive least squares.
//!
//! Each order step appends one whitened column per state dimension. A single
//! column extension updates the coefficients, the inverse Gram matrix
//! `B = (Z^T Z)^-1` and the residual error without refactorizing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{FitResult, SolverTag};
use crate::poly_model::Polynomial;
use crate::wls::{FitWindow, WhitenedSystem};

/// Recursion state after fitting the first `p` design columns.
///
/// The fitted design is kept as a thin QR factorization, grown one column at
/// a time with re-orthogonalization, so the update stays accurate on the
/// badly conditioned designs of higher orders.
#[derive(Debug, Clone)]
pub struct OrlsState {
    /// Fitted columns, `N x p`.
    pub design: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    /// Flat coefficients, length `p`.
    pub coeffs: DVector<f64>,
    pub residual: DVector<f64>,
    /// Residual sum of squares.
    pub error: f64,
}

/// One column extension.
#[derive(Debug, Clone)]
pub struct Extension {
    pub state: OrlsState,
    /// `(z^T W y)^2 / (z^T W z)` with `W` the orthogonal projector.
    pub reduction: f64,
}

impl OrlsState {
    /// State with no columns: zero coefficients and the full target energy.
    pub fn empty(target: &DVector<f64>) -> Self {
        let n = target.len();
        Self {
            design: DMatrix::zeros(n, 0),
            q: DMatrix::zeros(n, 0),
            r: DMatrix::zeros(0, 0),
            coeffs: DVector::zeros(0),
            residual: target.clone(),
            error: target.norm_squared(),
        }
    }

    pub fn n_columns(&self) -> usize {
        self.design.ncols()
    }

    /// `B = (Z^T Z)^-1`, the coefficient covariance of the whitened fit.
    pub fn gram_inv(&self) -> DMatrix<f64> {
        let p = self.n_columns();
        let r_inv = self
            .r
            .clone()
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("triangular factor has a nonzero diagonal");
        &r_inv * r_inv.transpose()
    }
}

/// Appends `column` to the fitted design.
///
/// Fails with [`Error::RankDeficient`] when the column is numerically inside
/// the span of the current design (`z^T W z <= 1e-10 |z|^2`).
pub fn orls_extend(state: &OrlsState, column: &DVector<f64>, target: &DVector<f64>) -> Result<Extension> {
    let p = state.n_columns();
    if column.len() != state.design.nrows() || target.len() != column.len() {
        return Err(Error::Dimension("column and target must match the design rows".into()));
    }
    let mut h = state.q.tr_mul(column);
    let mut projected = column - &state.q * &h;
    let h2 = state.q.tr_mul(&projected);
    projected -= &state.q * &h2;
    h += h2;
    let denom = projected.norm_squared();
    if !(denom > 1e-10 * column.norm_squared()) {
        return Err(Error::RankDeficient);
    }
    // a = B Z^T z, the coefficients of the column's projection on the design
    let a = state.r.clone().solve_upper_triangular(&h).ok_or(Error::RankDeficient)?;
    let num = projected.dot(&state.residual);
    let new_coeff = num / denom;

    let mut coeffs = DVector::zeros(p + 1);
    coeffs.rows_mut(0, p).copy_from(&(&state.coeffs - &a * new_coeff));
    coeffs[p] = new_coeff;

    let norm = denom.sqrt();
    let mut q = state.q.clone().insert_column(p, 0.0);
    q.set_column(p, &(&projected / norm));
    let mut r = state.r.clone().insert_row(p, 0.0).insert_column(p, 0.0);
    r.view_mut((0, p), (p, 1)).copy_from(&h);
    r[(p, p)] = norm;

    let mut design = state.design.clone().insert_column(p, 0.0);
    design.set_column(p, column);

    let reduction = num * num / denom;
    let residual = &state.residual - &projected * new_coeff;
    Ok(Extension {
        state: OrlsState { design, q, r, coeffs, residual, error: (state.error - reduction).max(0.0) },
        reduction,
    })
}

/// Extends `state` by all columns of the next order in `sys`.
fn extend_order(state: &OrlsState, sys: &WhitenedSystem) -> Result<Extension> {
    let start = state.n_columns();
    let mut current = Extension { state: state.clone(), reduction: 0.0 };
    for col in start..start + sys.dims {
        let ext = orls_extend(&current.state, &sys.design.column(col).into_owned(), &sys.target)?;
        current = Extension { state: ext.state, reduction: current.reduction + ext.reduction };
    }
    Ok(current)
}

/// Runs the recursion from the empty state up to `order`, returning the state
/// after each order `0..=order`.
pub fn orls_path(sys: &WhitenedSystem, order: usize) -> Result<Vec<OrlsState>> {
    let mut states = Vec::with_capacity(order + 1);
    let mut state = OrlsState::empty(&sys.target);
    for _ in 0..=order.min(sys.order) {
        state = extend_order(&state, sys)?.state;
        states.push(state.clone());
    }
    Ok(states)
}

/// `(D1 / (T-2), D1)` where `D1` is the error of the order-1 fit.
pub fn lambda_bounds(window: &FitWindow) -> Result<(f64, f64)> {
    let t = window.len();
    if t < 3 {
        return Err(Error::WindowTooShort { got: t, need: 3 });
    }
    let sys = window.whitened_system(1)?;
    let d1 = crate::wls::data_fit_error(&crate::wls::fit_ls(&sys)?, &sys);
    Ok((d1 / (t - 2) as f64, d1))
}

/// Upper bound `D1/lambda + 1` on the selected order.
pub fn gamma_upper_bound(d1: f64, lambda: f64) -> f64 {
    d1 / lambda + 1.0
}

/// Grid search from order 0, growing while the error reduction of the next
/// order exceeds `lambda`.
///
/// Growth also stops at the order bound `D1/lambda + 1`, at `T - 2`, and when
/// the next column is numerically collinear.
pub fn fit_order_limited(window: &FitWindow, lambda: f64) -> Result<FitResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let cap = window.len().saturating_sub(2).min(window.max_identifiable_order());
    let sys = window.whitened_system(cap)?;
    let mut diagnostics = Vec::new();

    let mut state = extend_order(&OrlsState::empty(&sys.target), &sys)?.state;
    let mut order = 0;
    let mut d1 = None;
    let mut iterations = 1;
    while order < cap {
        let ext = match extend_order(&state, &sys) {
            Ok(ext) => ext,
            Err(Error::RankDeficient) => {
                diagnostics.push(format!("collinear column at order {}", order + 1));
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        if order == 0 {
            d1 = Some(ext.state.error);
        }
        if ext.reduction.abs() <= lambda {
            break;
        }
        let bound = gamma_upper_bound(d1.unwrap_or(f64::INFINITY), lambda);
        if (order + 1) as f64 > bound {
            diagnostics.push(format!("order bound {bound:.3} reached"));
            break;
        }
        state = ext.state;
        order += 1;
    }

    let coeffs = sys.unflatten(&state.coeffs);
    Ok(FitResult {
        poly: Polynomial::new(coeffs, window.time_origin, window.time_scale)?,
        order,
        data_error: state.error,
        total_cost: state.error + lambda * (order + 1) as f64,
        lambda,
        iterations,
        solver: SolverTag::Orls,
        converged: true,
        covariance: Some(state.gram_inv()),
        diagnostics,
    })
}
