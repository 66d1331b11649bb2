//! OSPA between point sets and the trajectory-level Star-ID over a window.

use nalgebra::{dmatrix, dvector};
use tfot::metrics::{ospa, star_id, ta_star_id, MetricConfig};
use tfot::Polynomial;

fn main() -> tfot::Result<()> {
    let truth = vec![dvector![0.0, 0.0], dvector![50.0, 10.0]];
    let est = vec![dvector![1.0, -1.0], dvector![48.0, 12.0], dvector![200.0, 0.0]];
    for c in [5.0, 20.0, 100.0] {
        println!("ospa c = {c:>5}: {:.3}", ospa(&est, &truth, c, 2.0)?);
    }

    let cfg = MetricConfig::default();
    let a = Polynomial::new(dmatrix![0.0, 0.0; 3.0, 1.0], 0.0, 1.0)?;
    let b = Polynomial::new(dmatrix![100.0, 0.0; -2.0, 2.0], 0.0, 1.0)?;
    let a_hat = Polynomial::new(dmatrix![2.0, 0.0; 3.0, 1.1], 0.0, 1.0)?;
    let b_hat = Polynomial::new(dmatrix![100.0, 1.0; -2.1, 2.0], 0.0, 1.0)?;
    let star = star_id(&[&a_hat, &b_hat], &[&a, &b], 0.0, 10.0, 1.0, &cfg)?;
    println!("star-id over [0, 10] s: {star:.3} m s, time averaged {:.3} m", ta_star_id(star, 10.0)?);
    let lost = star_id(&[&a_hat], &[&a, &b], 0.0, 10.0, 1.0, &cfg)?;
    println!("with one track lost: {:.3} m", ta_star_id(lost, 10.0)?);
    Ok(())
}
