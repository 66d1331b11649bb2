//! Fit one sliding window of noisy position measurements with a fixed-order
//! least-squares fit and with the order-limited solver, and compare the
//! current position estimates.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tfot::fit::fit_fixed_order;
use tfot::{FitWindow, LambdaPolicy, Solver, Variance};

fn main() -> tfot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let times: Vec<f64> = (11..=20).map(|k| k as f64).collect();
    let truth = |t: f64| [2.0 + 3.0 * t - 0.04 * t * t, -5.0 + 1.5 * t];
    let y = DMatrix::from_fn(times.len(), 2, |k, d| truth(times[k])[d] + noise.sample(&mut rng));
    let window = FitWindow::new(times.clone(), y, Variance::Isotropic(1.0), 1.0)?;

    let now = *times.last().unwrap();
    println!("truth at t = {now}: {:?}", truth(now));
    for order in 1..=3 {
        let fit = fit_fixed_order(&window, order)?;
        println!("fixed order {order}: {:.3?}", fit.poly.evaluate(now).as_slice());
    }
    let orls = Solver::Orls(LambdaPolicy::GeometricMean).fit(&window)?;
    println!("order-limited picks order {}: {:.3?}", orls.order, orls.poly.evaluate(now).as_slice());
    println!("velocity {:.3?}", orls.poly.derivative_at(1, now).as_slice());
    Ok(())
}
