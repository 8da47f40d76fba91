//! Secant slopes of sqrt(1 + |sym A|^2) converge to |sym A|.

use bdrelax::cellsolver::integrand::Sqrt1PlusSym;
use bdrelax::cellsolver::Integrand;
use bdrelax::density::recession;
use bdrelax::Mat;

fn main() -> bdrelax::Result<()> {
    let a = Mat::new2(1.0, 2.0, 0.0, -1.0);
    let f = |x: &[f64], v: &[f64], m: &Mat| Sqrt1PlusSym.eval(x, v, m);
    let e = recession(&f, &[0.0, 0.0], &[0.0, 0.0], &a, &[1e1, 1e2, 1e3, 1e4])?;
    for (t, s) in &e.samples {
        println!("t = {t:>7}: {s:.10}");
    }
    println!("|sym A| = {:.10}", a.sym().norm());
    Ok(())
}
