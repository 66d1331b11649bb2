//! Walk the order-recursive path on a window and show which order each
//! weight selects, together with the admissible weight interval and the
//! order bound.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tfot::orls::{fit_order_limited, gamma_upper_bound, lambda_bounds, orls_path};
use tfot::{FitWindow, Variance};

fn main() -> tfot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let y = DMatrix::from_fn(10, 1, |k, _| {
        let t = times[k];
        1.0 + 0.5 * t + 0.3 * t * t + noise.sample(&mut rng)
    });
    let window = FitWindow::new(times, y, Variance::Isotropic(0.25), 1.0)?;

    let sys = window.whitened_system(6)?;
    for (order, state) in orls_path(&sys, 6)?.iter().enumerate() {
        println!("order {order}: residual {:.4}", state.error);
    }

    let (lo, hi) = lambda_bounds(&window)?;
    println!("weight interval ({lo:.3}, {hi:.3}]");
    for lambda in [0.5 * lo, lo * 1.01, (lo * hi).sqrt(), hi, 2.0 * hi] {
        let fit = fit_order_limited(&window, lambda)?;
        println!("lambda {lambda:>9.3}: order {} (bound {:.2})", fit.order, gamma_upper_bound(hi, lambda));
    }
    Ok(())
}
