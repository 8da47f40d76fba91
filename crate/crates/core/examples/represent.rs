//! Bulk, jump and Cantor parts of the relaxed energy of a field with all three,
//! and mollified energies of a pure jump approaching the jump part.

use bdrelax::bdmodel::StructuredBD;
use bdrelax::cellsolver::integrand::AbsSym;
use bdrelax::geometry::Aabb;
use bdrelax::represent::{assemble_homogeneous, relaxation_upper_check};

fn main() -> bdrelax::Result<()> {
    let u = StructuredBD::from_json(
        r#"{"dim": 2,
            "smooth": {"type": "affine", "a": [[0.5, 0.0], [0.0, 0.0]], "v": [0.0, 0.0]},
            "jumps": [{"normal": [0, 1], "offset": 0.2, "delta": [1.0, 0.0]}],
            "profile": {"eta": [1, 0], "xi": [0, 1],
                        "staircase": {"depth": 6, "total_mass": 1.0, "support": [-0.4, 0.4]}}}"#,
    )?;
    let b = Aabb::unit_centered(2);
    let r = assemble_homogeneous(&u, &b, &AbsSym, 6)?;
    println!("bulk {:.6}  jump {:.6}  cantor {:.6}  total {:.6}", r.bulk, r.jump, r.cantor, r.total);

    let jump = StructuredBD::two_state(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.1, 0.0])?;
    let c = relaxation_upper_check(&jump, &AbsSym, &b, &[1, 2, 3, 4], 8)?;
    for (level, v) in &c.levels {
        println!("mollifier width 2^-{level}: {v:.8}");
    }
    println!("representation: {:.8}", c.representation.total);
    Ok(())
}
