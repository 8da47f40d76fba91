//! Korn scaling ratio of a staircase on shrinking triadic windows.

use bdrelax::bdmodel::{CantorProfile, StructuredBD};
use bdrelax::geometry::Aabb;
use bdrelax::rigid::korn_ratio;

fn main() -> bdrelax::Result<()> {
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair)?;
    let k = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    for r in korn_ratio(&u, &k, &[0.0, 0.0], &[1.0, 1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0])? {
        println!(
            "eps = {:.5}  L1 residual = {:.4e}  |Eu| = {:.4e}  ratio = {:.6}",
            r.eps, r.l1_residual, r.ev_mass, r.ratio
        );
    }
    Ok(())
}
