//! Jump density of |sym ·| for a few jumps, against |δv ⊙ ν|.

use std::sync::Arc;

use bdrelax::cellsolver::integrand::{AbsJump, AbsSym};
use bdrelax::cellsolver::SolverOptions;
use bdrelax::density::{abs_sym_jump, jump_density, JumpForm};

fn main() -> bdrelax::Result<()> {
    let opts = SolverOptions::default();
    let ld = JumpForm::Ld(Arc::new(AbsSym));
    let sbd = JumpForm::Sbd(Arc::new(AbsSym), Arc::new(AbsJump));
    for (dv, nu) in [([0.0, 1.0], [1.0, 0.0]), ([1.0, 1.0], [0.6, 0.8]), ([2.0, -0.5], [0.0, 1.0])] {
        let a = jump_density(&ld, &[0.0, 0.0], &[0.0, 0.0], &dv, &nu, &[1.0], 32, &opts)?;
        let b = jump_density(&sbd, &[0.0, 0.0], &[0.0, 0.0], &dv, &nu, &[1.0], 16, &opts)?;
        println!(
            "dv = {dv:?}, nu = {nu:?}: LD {:.6}  SBD {:.6}  exact {:.6}",
            a.extrapolated,
            b.extrapolated,
            abs_sym_jump(&dv, &nu)
        );
    }
    Ok(())
}
