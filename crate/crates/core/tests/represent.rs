use bdrelax::bdmodel::{CantorProfile, StructuredBD};
use bdrelax::cellsolver::integrand::AbsSym;
use bdrelax::geometry::Aabb;
use bdrelax::represent::{assemble_homogeneous, relaxation_upper_check};
use bdrelax::rigid::project_out_rigid;
use bdrelax::Mat;

#[test]
fn parts_add_up() {
    let u = StructuredBD::two_state(&[0.0, 0.0], &[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.1])
        .unwrap()
        .plus_affine(Mat::new2(1.0, 0.0, 0.0, 1.0), vec![0.0, 0.0]);
    let r = assemble_homogeneous(&u, &Aabb::unit_centered(2), &AbsSym, 4).unwrap();
    // Bulk |Id| = √2 over a unit box; jump |2e₁ ⊙ e₂| = √2 over a unit segment.
    assert!((r.bulk - 2f64.sqrt()).abs() < 1e-12);
    assert!((r.jump - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(r.cantor, 0.0);
    assert!((r.total - r.bulk - r.jump - r.cantor).abs() < 1e-12);
}

#[test]
fn rigid_motions_do_not_change_the_total() {
    let stair = CantorProfile { depth: 5, total_mass: 1.0, support: (-0.4, 0.4) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap();
    let b = Aabb::unit_centered(2);
    let base = assemble_homogeneous(&u, &b, &AbsSym, 4).unwrap();
    let moved = u.plus_affine(Mat::new2(0.0, -0.7, 0.7, 0.0), vec![0.3, 2.0]);
    let r = assemble_homogeneous(&moved, &b, &AbsSym, 4).unwrap();
    assert!((r.total - base.total).abs() < 1e-12);
    let projected = project_out_rigid(&moved, &b).unwrap();
    let p = assemble_homogeneous(&projected, &b, &AbsSym, 4).unwrap();
    assert!((p.total - base.total).abs() < 1e-12);
}

#[test]
fn staircase_cantor_mass_is_its_variation() {
    let stair = CantorProfile { depth: 6, total_mass: 1.0, support: (-0.4, 0.4) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap();
    let r = assemble_homogeneous(&u, &Aabb::unit_centered(2), &AbsSym, 4).unwrap();
    // |e₁ ⊙ e₂| = 1/√2 per unit of variation over a unit-length plateau.
    assert!((r.cantor - 0.5f64.sqrt()).abs() < 1e-12, "{}", r.cantor);
}

#[test]
fn mollified_staircase_energy_approaches_the_representation() {
    let stair = CantorProfile { depth: 6, total_mass: 1.0, support: (-0.4, 0.4) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap();
    let c = relaxation_upper_check(&u, &AbsSym, &Aabb::unit_centered(2), &[2, 4], 6).unwrap();
    let total = c.representation.total;
    let at4 = c.levels[1].1;
    assert!((at4 - total).abs() / total < 0.05, "{at4} vs {total}");
}
