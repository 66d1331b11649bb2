//! Sparse coefficient fitting with the hybrid Newton solver, checked against
//! exhaustive support enumeration.

use nalgebra::{DMatrix, DVector};
use tfot::l0::{check_tau_stationary, l0_brute_force, regularized_cost, solve_l0, NewtonParams};
use tfot::wls::smoothness_constants;
use tfot::WhitenedSystem;

fn main() -> tfot::Result<()> {
    // y = 4 x0 - 2 x3 plus a small perturbation, five candidate columns.
    let design =
        DMatrix::from_fn(12, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0 + if i == j { 1.0 } else { 0.0 });
    let truth = DVector::from_vec(vec![4.0, 0.0, 0.0, -2.0, 0.0]);
    let target = &design * &truth + DVector::from_fn(12, |i, _| 0.05 * ((i as f64) * 1.7).sin());
    let sys = WhitenedSystem::new(design, target, 1)?;

    let (smooth, convex) = smoothness_constants(&sys);
    println!("L = {smooth:.3}, l = {convex:.3}");
    let params = NewtonParams { lambda: 0.5, tau: 0.5 / smooth, ..Default::default() };
    let out = solve_l0(&sys, &params)?;
    println!("coefficients {:.4?}", out.coeffs.as_slice());
    println!(
        "{} iterations ({} Newton, {} gradient), converged {}",
        out.iterations, out.newton_steps, out.gradient_steps, out.converged
    );
    println!("tau-stationary: {}", check_tau_stationary(&out.coeffs, out.tau, params.lambda, &sys));

    let (best, cost) = l0_brute_force(&sys, params.lambda);
    println!("solver cost {:.6}, enumeration {cost:.6}", regularized_cost(&sys, &out.coeffs, params.lambda));
    println!("enumerated coefficients {:.4?}", best.as_slice());
    Ok(())
}
