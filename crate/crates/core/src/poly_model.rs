//! Polynomial trajectory functions of time.
//!
//! A [`Polynomial`] maps time to an `r`-dimensional position. Coefficients are
//! expressed in a local time variable `u = (t - time_origin) / time_scale`, so
//! row 0 holds the position at the origin, row 1 the velocity (times the
//! scale), row 2 half the acceleration, and so on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: DMatrix<f64>,
    time_origin: f64,
    time_scale: f64,
}

impl Polynomial {
    /// `coeffs` has one row per power of local time and one column per
    /// state dimension.
    pub fn new(coeffs: DMatrix<f64>, time_origin: f64, time_scale: f64) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::Dimension("polynomial needs at least one coefficient row and column".into()));
        }
        if !(time_scale > 0.0) || !time_scale.is_finite() {
            return Err(Error::InvalidParameter(format!("time scale must be positive, got {time_scale}")));
        }
        Ok(Self { coeffs, time_origin, time_scale })
    }

    /// Constant trajectory sitting at `position`.
    pub fn constant(position: &[f64], time_origin: f64, time_scale: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, position.len(), position), time_origin, time_scale)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.nrows() - 1
    }

    pub fn dims(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn time_origin(&self) -> f64 {
        self.time_origin
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn local_time(&self, t: f64) -> f64 {
        (t - self.time_origin) / self.time_scale
    }

    /// Position at time `t`, evaluated with Horner's scheme.
    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let u = self.local_time(t);
        let mut out = DVector::zeros(self.dims());
        for i in (0..=self.order()).rev() {
            for d in 0..self.dims() {
                out[d] = out[d] * u + self.coeffs[(i, d)];
            }
        }
        out
    }

    /// `d`-th time derivative at `t`, including the `time_scale^-d` chain-rule
    /// factor. Zero once `d` exceeds the order.
    pub fn derivative_at(&self, d: usize, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dims());
        if d > self.order() {
            return out;
        }
        let u = self.local_time(t);
        for i in (d..=self.order()).rev() {
            let falling = falling_factorial(i, d);
            for k in 0..self.dims() {
                out[k] = out[k] * u + falling * self.coeffs[(i, k)];
            }
        }
        out / self.time_scale.powi(d as i32)
    }

    /// Re-expresses the same trajectory with a different origin and scale.
    pub fn rebased(&self, time_origin: f64, time_scale: f64) -> Result<Self> {
        // u_old = a + b u_new with a = (origin_new - origin_old)/scale_old, b = scale_new/scale_old
        let a = (time_origin - self.time_origin) / self.time_scale;
        let b = time_scale / self.time_scale;
        let n = self.order() + 1;
        let mut out = DMatrix::zeros(n, self.dims());
        for i in 0..n {
            // (a + b u)^i = sum_j C(i,j) a^(i-j) b^j u^j
            for j in 0..=i {
                let w = binomial(i, j) * a.powi((i - j) as i32) * b.powi(j as i32);
                for d in 0..self.dims() {
                    out[(j, d)] += w * self.coeffs[(i, d)];
                }
            }
        }
        Self::new(out, time_origin, time_scale)
    }
}

fn falling_factorial(i: usize, d: usize) -> f64 {
    ((i - d + 1)..=i).fold(1.0, |acc, k| acc * k as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Sliding window `K = [k', k]` of step indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub k_prime: i64,
    pub k: i64,
    pub dt: f64,
    pub capacity: usize,
}

impl TimeWindow {
    pub fn new(k_prime: i64, k: i64, dt: f64, capacity: usize) -> Result<Self> {
        if k < k_prime {
            return Err(Error::InvalidParameter(format!("window end {k} precedes start {k_prime}")));
        }
        if capacity == 0 || (k - k_prime + 1) as usize > capacity {
            return Err(Error::InvalidParameter(format!("window [{k_prime}, {k}] exceeds capacity {capacity}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { k_prime, k, dt, capacity })
    }

    /// Most recent `capacity` steps ending at `k`, starting no earlier than step 1.
    pub fn sliding(k: i64, dt: f64, capacity: usize) -> Result<Self> {
        let k_prime = (k - capacity as i64 + 1).max(1);
        Self::new(k_prime, k, dt, capacity)
    }

    pub fn len(&self) -> usize {
        (self.k - self.k_prime + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (self.k_prime..=self.k).map(|j| j as f64 * self.dt).collect()
    }

    /// Local-time origin used for fitting: the window start.
    pub fn origin(&self) -> f64 {
        self.k_prime as f64 * self.dt
    }

    pub fn vandermonde(&self, order: usize) -> Result<DMatrix<f64>> {
        vandermonde(&self.times(), order, self.origin(), self.dt)
    }
}

/// Powers `[1, u, u^2, ..., u^order]` of a local time value.
pub fn monomials(u: f64, order: usize) -> DVector<f64> {
    let mut row = DVector::zeros(order + 1);
    let mut p = 1.0;
    for i in 0..=order {
        row[i] = p;
        p *= u;
    }
    row
}

/// Design matrix with row `j` equal to the monomials of `(times[j] - origin) / scale`.
pub fn vandermonde(times: &[f64], order: usize, origin: f64, scale: f64) -> Result<DMatrix<f64>> {
    if times.is_empty() {
        return Err(Error::WindowTooShort { got: 0, need: 1 });
    }
    if order + 1 > times.len() {
        return Err(Error::Underdetermined { params: order + 1, rows: times.len() });
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!("time scale must be positive, got {scale}")));
    }
    let mut z = DMatrix::zeros(times.len(), order + 1);
    for (j, &t) in times.iter().enumerate() {
        z.set_row(j, &monomials((t - origin) / scale, order).transpose());
    }
    Ok(z)
}
