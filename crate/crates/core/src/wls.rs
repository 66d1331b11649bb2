//! Weighted least-squares machinery shared by every solver.
//!
//! Measurements of a window are stacked time-major into a vector of length
//! `T*m` (row `t*m + j` is component `j` of step `t`). Coefficients of an
//! order-`g` polynomial over `r` state dimensions are flattened order-major
//! (index `i*r + d`), so the design of order `g` is a column prefix of the
//! design of any higher order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly_model::{monomials, Polynomial};

/// Covariance of the stacked measurement vector of a window.
#[derive(Debug, Clone, PartialEq)]
pub enum Variance {
    /// `sigma^2 * I`, the homogeneous case where no factorization is needed.
    Isotropic(f64),
    /// One `m x m` block per step; steps are uncorrelated.
    Blocks(Vec<DMatrix<f64>>),
    /// Full `T*m x T*m` covariance, allowing correlation across time.
    Full(DMatrix<f64>),
}

impl Variance {
    /// Same `m x m` covariance at each of `steps` steps.
    pub fn repeated(block: &DMatrix<f64>, steps: usize) -> Self {
        Variance::Blocks(vec![block.clone(); steps])
    }

    pub fn to_dense(&self, steps: usize, m: usize) -> DMatrix<f64> {
        match self {
            Variance::Isotropic(s2) => DMatrix::identity(steps * m, steps * m) * *s2,
            Variance::Blocks(blocks) => {
                let mut out = DMatrix::zeros(steps * m, steps * m);
                for (t, b) in blocks.iter().enumerate() {
                    out.view_mut((t * m, t * m), (m, m)).copy_from(b);
                }
                out
            }
            Variance::Full(v) => v.clone(),
        }
    }
}

/// Measurements over one sliding window.
#[derive(Debug, Clone)]
pub struct FitWindow {
    pub times: Vec<f64>,
    /// `T x m`, one row per step.
    pub measurements: DMatrix<f64>,
    pub variance: Variance,
    /// Expected measurement noise, subtracted from every step.
    pub mean_noise: DVector<f64>,
    /// Per-step `m x r` observation matrices. `None` means the identity
    /// (position measurements, `m == r`).
    pub observation: Option<Vec<DMatrix<f64>>>,
    pub time_origin: f64,
    pub time_scale: f64,
}

impl FitWindow {
    /// Position measurements with the local time origin at the first sample.
    pub fn new(times: Vec<f64>, measurements: DMatrix<f64>, variance: Variance, time_scale: f64) -> Result<Self> {
        let origin = times.first().copied().unwrap_or(0.0);
        let m = measurements.ncols();
        let w = Self {
            times,
            measurements,
            variance,
            mean_noise: DVector::zeros(m),
            observation: None,
            time_origin: origin,
            time_scale,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, m) = self.measurements.shape();
        if t == 0 {
            return Err(Error::WindowTooShort { got: 0, need: 1 });
        }
        if self.times.len() != t {
            return Err(Error::Dimension(format!("{} times for {} measurements", self.times.len(), t)));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("window times must be strictly increasing".into()));
        }
        if !(self.time_scale > 0.0) {
            return Err(Error::InvalidParameter("time scale must be positive".into()));
        }
        if self.mean_noise.len() != m {
            return Err(Error::Dimension(format!("mean noise has {} entries, expected {m}", self.mean_noise.len())));
        }
        match &self.variance {
            Variance::Isotropic(s2) if !(*s2 > 0.0) => {
                return Err(Error::NotPositiveDefinite("isotropic variance must be positive"))
            }
            Variance::Blocks(b) if b.len() != t || b.iter().any(|b| b.shape() != (m, m)) => {
                return Err(Error::Dimension(format!("expected {t} variance blocks of size {m}x{m}")))
            }
            Variance::Full(v) if v.shape() != (t * m, t * m) => {
                return Err(Error::Dimension(format!("full variance must be {0}x{0}", t * m)))
            }
            _ => {}
        }
        if let Some(obs) = &self.observation {
            let r = obs.first().map(|j| j.ncols()).unwrap_or(0);
            if obs.len() != t || r == 0 || obs.iter().any(|j| j.shape() != (m, r)) {
                return Err(Error::Dimension(format!("expected {t} observation matrices of {m} rows")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn measurement_dims(&self) -> usize {
        self.measurements.ncols()
    }

    pub fn state_dims(&self) -> usize {
        match &self.observation {
            Some(obs) => obs[0].ncols(),
            None => self.measurement_dims(),
        }
    }

    pub fn local_times(&self) -> Vec<f64> {
        self.times.iter().map(|t| (t - self.time_origin) / self.time_scale).collect()
    }

    /// Largest order whose design has no more unknowns than observations.
    pub fn max_identifiable_order(&self) -> usize {
        let rows = self.len() * self.measurement_dims();
        let r = self.state_dims();
        (rows / r).min(self.len()).saturating_sub(1)
    }

    /// Unwhitened stacked design of the given order.
    pub fn design(&self, order: usize) -> Result<DMatrix<f64>> {
        let (t_len, m) = self.measurements.shape();
        let r = self.state_dims();
        if order + 1 > t_len {
            return Err(Error::Underdetermined { params: order + 1, rows: t_len });
        }
        let n = (order + 1) * r;
        let mut z = DMatrix::zeros(t_len * m, n);
        for (t, u) in self.local_times().into_iter().enumerate() {
            let pw = monomials(u, order);
            for i in 0..=order {
                for j in 0..m {
                    for d in 0..r {
                        let h = match &self.observation {
                            Some(obs) => obs[t][(j, d)],
                            None => f64::from(u8::from(j == d)),
                        };
                        z[(t * m + j, i * r + d)] = pw[i] * h;
                    }
                }
            }
        }
        Ok(z)
    }

    /// Stacked measurement vector with the mean noise removed.
    pub fn stacked_measurements(&self) -> DVector<f64> {
        let (t_len, m) = self.measurements.shape();
        DVector::from_fn(t_len * m, |k, _| self.measurements[(k / m, k % m)] - self.mean_noise[k % m])
    }

    pub fn whitener(&self) -> Result<Whitener> {
        let m = self.measurement_dims();
        match &self.variance {
            Variance::Isotropic(s2) => Ok(Whitener::Scalar(1.0 / s2.sqrt())),
            Variance::Blocks(blocks) => blocks
                .iter()
                .map(|b| b.clone().cholesky().map(|c| c.l()).ok_or(Error::NotPositiveDefinite("variance block")))
                .collect::<Result<Vec<_>>>()
                .map(|ls| Whitener::Blocks { factors: ls, block: m }),
            Variance::Full(v) => {
                v.clone().cholesky().map(|c| Whitener::Full(c.l())).ok_or(Error::NotPositiveDefinite("full variance"))
            }
        }
    }

    /// Whitened system of the given order.
    pub fn whitened_system(&self, order: usize) -> Result<WhitenedSystem> {
        whiten(self, &self.design(order)?)
    }
}

/// Applies `A` with `A^T A = var^-1`, i.e. `A = L^-1` for the Cholesky factor `L`.
#[derive(Debug, Clone)]
pub enum Whitener {
    Scalar(f64),
    Blocks { factors: Vec<DMatrix<f64>>, block: usize },
    Full(DMatrix<f64>),
}

impl Whitener {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Scalar(s) => x * *s,
            Whitener::Blocks { factors, block } => {
                let mut out = x.clone();
                for (t, l) in factors.iter().enumerate() {
                    let rows = x.rows(t * block, *block).into_owned();
                    let solved = l.solve_lower_triangular(&rows).expect("cholesky factor is invertible");
                    out.rows_mut(t * block, *block).copy_from(&solved);
                }
                out
            }
            Whitener::Full(l) => l.solve_lower_triangular(x).expect("cholesky factor is invertible"),
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        DVector::from_column_slice(self.apply(&m).as_slice())
    }
}

/// Least-squares problem `D(c) = |y - Z c|^2` after whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSystem {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub order: usize,
    pub dims: usize,
}

impl WhitenedSystem {
    pub fn new(design: DMatrix<f64>, target: DVector<f64>, dims: usize) -> Result<Self> {
        let n = design.ncols();
        if dims == 0 || n == 0 || n % dims != 0 {
            return Err(Error::Dimension(format!("{n} design columns do not split into {dims} dimensions")));
        }
        if design.nrows() != target.len() {
            return Err(Error::Dimension(format!("design has {} rows, target {}", design.nrows(), target.len())));
        }
        Ok(Self { design, target, order: n / dims - 1, dims })
    }

    pub fn n_coeffs(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    /// Prefix system of a lower order.
    pub fn truncated(&self, order: usize) -> WhitenedSystem {
        let n = ((order + 1) * self.dims).min(self.n_coeffs());
        WhitenedSystem {
            design: self.design.columns(0, n).into_owned(),
            target: self.target.clone(),
            order: n / self.dims - 1,
            dims: self.dims,
        }
    }

    pub fn flatten(&self, coeffs: &DMatrix<f64>) -> DVector<f64> {
        flatten_coeffs(coeffs)
    }

    pub fn unflatten(&self, flat: &DVector<f64>) -> DMatrix<f64> {
        unflatten_coeffs(flat, self.dims)
    }

    pub fn residual(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.target - &self.design * c
    }

    /// `D(c)` for flat coefficients.
    pub fn cost(&self, c: &DVector<f64>) -> f64 {
        self.residual(c).norm_squared()
    }

    /// `-2 Z^T (y - Z c)`.
    pub fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        self.design.tr_mul(&self.residual(c)) * -2.0
    }

    /// `2 Z^T Z`, constant because the cost is quadratic.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.design.tr_mul(&self.design) * 2.0
    }
}

pub fn flatten_coeffs(coeffs: &DMatrix<f64>) -> DVector<f64> {
    let r = coeffs.ncols();
    DVector::from_fn(coeffs.len(), |k, _| coeffs[(k / r, k % r)])
}

pub fn unflatten_coeffs(flat: &DVector<f64>, dims: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(flat.len() / dims, dims, flat.as_slice())
}

/// `z^T P^-1 z` via a Cholesky solve.
pub fn mahalanobis_sq(z: &DVector<f64>, p: &DMatrix<f64>) -> Result<f64> {
    if p.shape() != (z.len(), z.len()) {
        return Err(Error::Dimension(format!("{}-vector against {:?} matrix", z.len(), p.shape())));
    }
    let chol = p.clone().cholesky().ok_or(Error::NotPositiveDefinite("mahalanobis weight"))?;
    Ok(z.dot(&chol.solve(z)))
}

/// Whitens an arbitrary stacked design against the window's variance.
pub fn whiten(window: &FitWindow, design: &DMatrix<f64>) -> Result<WhitenedSystem> {
    window.validate()?;
    let rows = window.len() * window.measurement_dims();
    if design.nrows() != rows {
        return Err(Error::Dimension(format!("design has {} rows, window stacks {rows}", design.nrows())));
    }
    let a = window.whitener()?;
    WhitenedSystem::new(a.apply(design), a.apply_vec(&window.stacked_measurements()), window.state_dims())
}

/// Unregularized least-squares coefficients (flat) via Householder QR.
pub fn fit_ls_flat(sys: &WhitenedSystem) -> Result<DVector<f64>> {
    let (rows, n) = sys.design.shape();
    if n > rows {
        return Err(Error::Underdetermined { params: n, rows });
    }
    let qr = sys.design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-12 * scale) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().tr_mul(&sys.target);
    r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)
}

/// Unregularized least-squares coefficient matrix, `(order+1) x r`.
pub fn fit_ls(sys: &WhitenedSystem) -> Result<DMatrix<f64>> {
    Ok(sys.unflatten(&fit_ls_flat(sys)?))
}

/// `D_K(C)`, the whitened residual sum of squares.
pub fn data_fit_error(coeffs: &DMatrix<f64>, sys: &WhitenedSystem) -> f64 {
    sys.cost(&flatten_coeffs(coeffs))
}

/// Smoothness `L = 2 lambda_max(Z^T Z)` and strong convexity `l = 2 lambda_min(Z^T Z)`.
pub fn smoothness_constants(sys: &WhitenedSystem) -> (f64, f64) {
    let eig = sys.design.tr_mul(&sys.design).symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    (2.0 * max, 2.0 * min.max(0.0))
}

/// Coefficient covariance `(Z^T Z)^-1` restricted to `support`, zero elsewhere.
pub fn restricted_covariance(sys: &WhitenedSystem, support: &[usize]) -> Option<DMatrix<f64>> {
    let n = sys.n_coeffs();
    let mut out = DMatrix::zeros(n, n);
    if support.is_empty() {
        return Some(out);
    }
    let zs = sys.design.select_columns(support);
    let inv = zs.tr_mul(&zs).cholesky()?.inverse();
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            out[(i, j)] = inv[(a, b)];
        }
    }
    Some(out)
}

/// Least squares restricted to `support`, zero elsewhere.
pub fn restricted_ls(sys: &WhitenedSystem, support: &[usize]) -> Option<DVector<f64>> {
    let mut out = DVector::zeros(sys.n_coeffs());
    if support.is_empty() {
        return Some(out);
    }
    let zs = sys.design.select_columns(support);
    let sol = zs.tr_mul(&zs).cholesky()?.solve(&zs.tr_mul(&sys.target));
    for (a, &i) in support.iter().enumerate() {
        out[i] = sol[a];
    }
    Some(out)
}

/// Prediction covariance of `poly(t)` given a flat coefficient covariance.
pub fn prediction_covariance(poly: &Polynomial, coeff_cov: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let r = poly.dims();
    let n = coeff_cov.nrows();
    let order = n / r - 1;
    let pw = monomials(poly.local_time(t), order);
    let mut phi = DMatrix::zeros(r, n);
    for i in 0..=order {
        for d in 0..r {
            phi[(d, i * r + d)] = pw[i];
        }
    }
    &phi * coeff_cov * phi.transpose()
}
