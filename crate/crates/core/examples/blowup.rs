//! Blow-ups of a Cantor staircase at a point of its support, each fitted to a
//! one-dimensional profile, plus the normalization of one fit.

use bdrelax::bdmodel::{CantorProfile, StructuredBD};
use bdrelax::blowup::blowup_sequence;

fn main() -> bdrelax::Result<()> {
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair)?;
    let schedule: Vec<f64> = (1..=5).map(|k| 3f64.powi(-k)).collect();
    let steps = blowup_sequence(&u, &[0.25, 0.5], &schedule, 1.0, 32)?;
    for s in &steps {
        println!(
            "eps = {:.5}  |Eu_eps|(K) = {:.12}  residual = {:.1e}  beta = {:.4}",
            s.eps, s.emass, s.residual, s.beta
        );
    }
    if let Some(n) = steps.last().and_then(|s| s.normalized.as_ref()) {
        println!("normalized profile: beta = {:.6}, kappa = {:.6}, mean = {:.1e}", n.beta, n.kappa, n.psi.mean());
    }
    Ok(())
}
