//! Fit a trajectory from range-bearing measurements by linearizing the
//! measurement model about a prior trajectory and refitting a few times.

use nalgebra::{dmatrix, dvector, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tfot::fit::fit_fixed_order;
use tfot::measurement::{build_linearized_window, nonlinear_cost, priors_from, MeasurementModel};
use tfot::Polynomial;

fn main() -> tfot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = dmatrix![4.0, 0.0; 0.0, 1e-4];
    let model = MeasurementModel::range_bearing(noise.clone(), dvector![0.0, 0.0])?;
    let truth = Polynomial::new(dmatrix![300.0, 100.0; -4.0, 6.0; 0.1, -0.05], 0.0, 1.0)?;
    let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let rows: Vec<_> =
        times.iter().map(|&t| model.measure(&truth.evaluate(t), &mut rng)).collect::<tfot::Result<_>>()?;
    let y = DMatrix::from_fn(times.len(), 2, |k, j| rows[k][j]);

    // A deliberately poor prior: the right start point, no motion.
    let mut estimate = Polynomial::new(dmatrix![290.0, 110.0], 0.0, 1.0)?;
    for pass in 0..4 {
        let lin = build_linearized_window(&model, &y, &priors_from(&estimate, &times), &times)?;
        let window = lin.into_fit_window(times.clone(), &noise, 1.0)?;
        estimate = fit_fixed_order(&window, 2)?.poly;
        println!(
            "pass {pass}: cost {:.3}, position error at t = 9: {:.3} m",
            nonlinear_cost(&model, &estimate, &times, &y)?,
            (estimate.evaluate(9.0) - truth.evaluate(9.0)).norm()
        );
    }
    Ok(())
}
