//! Discrete symmetric quasiconvex envelope of a convex density: the cell value
//! is the density itself at every mesh.

use std::sync::Arc;

use bdrelax::cellsolver::integrand::Sqrt1PlusSym;
use bdrelax::cellsolver::SolverOptions;
use bdrelax::density::sq_envelope;
use bdrelax::Mat;

fn main() -> bdrelax::Result<()> {
    let a = Mat::new2(1.0, 0.5, 0.5, -0.25);
    let e = sq_envelope(Arc::new(Sqrt1PlusSym), &a, &[4, 8, 16], &SolverOptions::default())?;
    for (mesh, v) in &e.samples {
        println!("mesh {mesh:>3}: {v:.12}");
    }
    println!("sqrt(1 + |sym A|^2) = {:.12}", (1.0 + a.sym().norm().powi(2)).sqrt());
    Ok(())
}
