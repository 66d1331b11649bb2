//! Measurement models: linear position measurements and range-bearing
//! measurements from a fixed sensor, with first-order linearization and
//! polar-to-Cartesian conversion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly_model::Polynomial;
use crate::wls::{FitWindow, Variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    LinearPosition,
    /// `(range, bearing)` with bearing `atan2(dy, dx)` in radians.
    RangeBearing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub kind: MeasurementKind,
    pub noise_cov: DMatrix<f64>,
    pub noise_mean: DVector<f64>,
    pub sensor_origin: DVector<f64>,
    noise_factor: DMatrix<f64>,
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

impl MeasurementModel {
    pub fn new(kind: MeasurementKind, noise_cov: DMatrix<f64>, sensor_origin: DVector<f64>) -> Result<Self> {
        let m = noise_cov.nrows();
        if noise_cov.ncols() != m || m == 0 {
            return Err(Error::Dimension("noise covariance must be square".into()));
        }
        if kind == MeasurementKind::RangeBearing && (m != 2 || sensor_origin.len() != 2) {
            return Err(Error::Dimension("range-bearing model is two-dimensional".into()));
        }
        let noise_factor = if noise_cov.iter().all(|v| *v == 0.0) {
            DMatrix::zeros(m, m)
        } else {
            noise_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("measurement noise"))?.l()
        };
        Ok(Self { kind, noise_mean: DVector::zeros(m), noise_cov, sensor_origin, noise_factor })
    }

    pub fn linear(noise_cov: DMatrix<f64>) -> Result<Self> {
        let r = noise_cov.nrows();
        Self::new(MeasurementKind::LinearPosition, noise_cov, DVector::zeros(r))
    }

    pub fn range_bearing(noise_cov: DMatrix<f64>, sensor_origin: DVector<f64>) -> Result<Self> {
        Self::new(MeasurementKind::RangeBearing, noise_cov, sensor_origin)
    }

    pub fn dims(&self) -> usize {
        self.noise_cov.nrows()
    }

    fn offset(&self, state: &DVector<f64>) -> Result<(f64, f64)> {
        if state.len() != 2 {
            return Err(Error::Dimension(format!("range-bearing needs a 2-d position, got {}", state.len())));
        }
        let (dx, dy) = (state[0] - self.sensor_origin[0], state[1] - self.sensor_origin[1]);
        if dx == 0.0 && dy == 0.0 {
            return Err(Error::ZeroRange);
        }
        Ok((dx, dy))
    }

    /// Noise-free measurement `h(x)`.
    pub fn predict(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            MeasurementKind::LinearPosition => {
                if state.len() != self.dims() {
                    return Err(Error::Dimension(format!("state has {} entries, model {}", state.len(), self.dims())));
                }
                Ok(state.clone())
            }
            MeasurementKind::RangeBearing => {
                let (dx, dy) = self.offset(state)?;
                Ok(DVector::from_vec(vec![dx.hypot(dy), dy.atan2(dx)]))
            }
        }
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = DVector::from_fn(self.dims(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.noise_factor * n + &self.noise_mean
    }

    pub fn measure<R: Rng + ?Sized>(&self, state: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        let mut y = self.predict(state)? + self.sample_noise(rng);
        if self.kind == MeasurementKind::RangeBearing {
            y[1] = wrap_angle(y[1]);
        }
        Ok(y)
    }

    /// `dh/dx` at `state`.
    pub fn jacobian(&self, state: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.kind {
            MeasurementKind::LinearPosition => Ok(DMatrix::identity(self.dims(), self.dims())),
            MeasurementKind::RangeBearing => {
                let (dx, dy) = self.offset(state)?;
                let r2 = dx * dx + dy * dy;
                let r = r2.sqrt();
                Ok(DMatrix::from_row_slice(2, 2, &[dx / r, dy / r, -dy / r2, dx / r2]))
            }
        }
    }

    /// Innovation `y - h(x)`, with the bearing difference wrapped.
    pub fn innovation(&self, y: &DVector<f64>, state: &DVector<f64>) -> Result<DVector<f64>> {
        let mut d = y - self.predict(state)?;
        if self.kind == MeasurementKind::RangeBearing {
            d[1] = wrap_angle(d[1]);
        }
        Ok(d)
    }
}

/// Window linearized about prior state estimates.
#[derive(Debug, Clone)]
pub struct LinearizedWindow {
    /// `T x m`, rows `y_t - h(x_t) + J_t x_t`.
    pub delta_y: DMatrix<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
}

impl LinearizedWindow {
    /// `diag(J_1, ..., J_T)`.
    pub fn j_block(&self) -> DMatrix<f64> {
        let (m, r) = self.jacobians[0].shape();
        let t = self.jacobians.len();
        let mut out = DMatrix::zeros(t * m, t * r);
        for (k, j) in self.jacobians.iter().enumerate() {
            out.view_mut((k * m, k * r), (m, r)).copy_from(j);
        }
        out
    }

    /// Fit window whose design is `J_K Z` and whose data are `delta_y`.
    pub fn into_fit_window(self, times: Vec<f64>, noise_cov: &DMatrix<f64>, time_scale: f64) -> Result<FitWindow> {
        let t = times.len();
        let mut w = FitWindow::new(times, self.delta_y, Variance::repeated(noise_cov, t), time_scale)?;
        w.observation = Some(self.jacobians);
        w.validate()?;
        Ok(w)
    }
}

/// Linearizes every measurement of a window about `priors[t]`, the estimate
/// of the state at that step carried over from the previous fit.
pub fn build_linearized_window(
    model: &MeasurementModel,
    measurements: &DMatrix<f64>,
    priors: &[Option<DVector<f64>>],
    times: &[f64],
) -> Result<LinearizedWindow> {
    let (t_len, m) = measurements.shape();
    if priors.len() != t_len || times.len() != t_len || m != model.dims() {
        return Err(Error::Dimension("priors, times and measurements must cover the same steps".into()));
    }
    let mut delta_y = DMatrix::zeros(t_len, m);
    let mut jacobians = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = priors[t].as_ref().ok_or(Error::MissingPrior(times[t]))?;
        let j = model.jacobian(x)?;
        let y = measurements.row(t).transpose();
        let row = model.innovation(&y, x)? + &j * x;
        delta_y.set_row(t, &row.transpose());
        jacobians.push(j);
    }
    Ok(LinearizedWindow { delta_y, jacobians })
}

/// Priors for a window taken from a previous trajectory estimate.
pub fn priors_from(poly: &Polynomial, times: &[f64]) -> Vec<Option<DVector<f64>>> {
    times.iter().map(|&t| Some(poly.evaluate(t))).collect()
}

/// Measurement-space cost `sum_t |y_t - h(F(t))|^2_{R^-1}` of a trajectory.
pub fn nonlinear_cost(
    model: &MeasurementModel,
    poly: &Polynomial,
    times: &[f64],
    measurements: &DMatrix<f64>,
) -> Result<f64> {
    let chol = model.noise_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("measurement noise"))?;
    let mut total = 0.0;
    for (t, &time) in times.iter().enumerate() {
        let d = model.innovation(&measurements.row(t).transpose(), &poly.evaluate(time))?;
        total += d.dot(&chol.solve(&d));
    }
    Ok(total)
}

/// Polar to Cartesian conversion with first-order covariance propagation.
pub fn convert_range_bearing(
    measurement: &DVector<f64>,
    noise_cov: &DMatrix<f64>,
    sensor_origin: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if measurement.len() != 2 || noise_cov.shape() != (2, 2) || sensor_origin.len() != 2 {
        return Err(Error::Dimension("range-bearing conversion is two-dimensional".into()));
    }
    let (r, th) = (measurement[0], measurement[1]);
    if !(r > 0.0) {
        return Err(Error::ZeroRange);
    }
    let (s, c) = th.sin_cos();
    let pos = DVector::from_vec(vec![sensor_origin[0] + r * c, sensor_origin[1] + r * s]);
    let g = DMatrix::from_row_slice(2, 2, &[c, -r * s, s, r * c]);
    Ok((pos, &g * noise_cov * g.transpose()))
}
