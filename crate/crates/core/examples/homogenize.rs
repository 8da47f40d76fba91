//! Homogenized laminate: Dirichlet cells on growing squares against the
//! periodic cell.

use std::sync::Arc;

use bdrelax::cellsolver::integrand::{Laminate, LaminatePattern};
use bdrelax::homog::{fhom_dirichlet, fhom_periodic, HomogSpec};
use bdrelax::Mat;

fn main() -> bdrelax::Result<()> {
    let spec = HomogSpec::new(
        Arc::new(Laminate::new(LaminatePattern::Cos)),
        Mat::new2(1.0, 0.0, 0.0, 0.0),
        vec![1, 2, 4],
        8,
    );
    let d = fhom_dirichlet(&spec)?;
    for (t, v) in &d.samples {
        println!("T = {t}: {v:.6}");
    }
    println!("extrapolated in 1/T: {:.6}", d.extrapolated);
    println!("periodic cell:       {:.6}", fhom_periodic(&spec)?);
    Ok(())
}
