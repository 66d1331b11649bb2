//! Compare the `l1` (ADMM) and `l0` fits of the same trajectory window.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tfot::l0::NewtonParams;
use tfot::l1::AdmmParams;
use tfot::{FitWindow, LambdaPolicy, Solver, Variance};

fn main() -> tfot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let y = DMatrix::from_fn(10, 2, |k, d| {
        let t = times[k] - 1.0;
        [10.0 + 2.0 * t, 4.0 - t + 0.2 * t * t][d] + noise.sample(&mut rng)
    });
    let window = FitWindow::new(times, y, Variance::Isotropic(1.0), 1.0)?;
    let lambda = LambdaPolicy::GeometricMean.resolve(&window)?;
    println!("lambda {lambda:.3}");

    let l1 = Solver::L1Admm { max_order: 3, lambda: LambdaPolicy::Fixed(lambda), params: AdmmParams::default() };
    let l0 = Solver::L0Newton { max_order: 3, lambda: LambdaPolicy::Fixed(lambda), params: NewtonParams::default() };
    for solver in [l1, l0] {
        let fit = solver.fit(&window)?;
        println!("{}: {} nonzeros, data error {:.3}", fit.solver, fit.nonzeros(), fit.data_error);
        for row in fit.poly.coeffs().row_iter() {
            println!("  {:>9.4?}", row.iter().collect::<Vec<_>>());
        }
    }
    Ok(())
}
