//! Müller's density h: h(Id) = 0 < h(A0) = 2 although sym Id = sym A0, and
//! the discrete envelope at A0 stays away from zero.

use bdrelax::cellsolver::SolverOptions;
use bdrelax::density::mueller_suite;

fn main() -> bdrelax::Result<()> {
    let opts = SolverOptions { multistarts: 8, ..Default::default() };
    let r = mueller_suite(&[8, 16, 32], &opts)?;
    println!("h(Id) = {}, h(A0) = {}", r.h_id, r.h_a0);
    for ((mesh, id), (_, a0)) in r.qh_id.samples.iter().zip(&r.qh_a0.samples) {
        println!("mesh {mesh:>3}: Qh(Id) = {id:.3e}  Qh(A0) = {a0:.6}");
    }
    println!(
        "witness: 1/2 h(2 Id) + 1/2 h(2 J) = {} with mean A0 ({})",
        r.witness.weighted_h,
        if r.witness.verified { "verified" } else { "not verified" }
    );
    Ok(())
}
