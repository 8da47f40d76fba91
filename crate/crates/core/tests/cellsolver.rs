use std::sync::Arc;

use bdrelax::cellsolver::integrand::{AbsJump, AbsSym, MuellerH, Penalty, Sqrt1PlusSym};
use bdrelax::cellsolver::{solve_ld, solve_sbd, BoundaryData, CellSpec, Integrand, SolverOptions};
use bdrelax::geometry::Aabb;
use bdrelax::Mat;

fn frob(a: [[f64; 2]; 2]) -> f64 {
    let s = 0.5 * (a[0][1] + a[1][0]);
    (a[0][0] * a[0][0] + 2.0 * s * s + a[1][1] * a[1][1]).sqrt()
}

fn affine_spec(a: Mat, mesh: usize) -> CellSpec {
    CellSpec::new(Aabb::unit_centered(2), BoundaryData::affine(a), mesh)
}

#[test]
fn convex_density_equals_its_value_at_the_datum() {
    for (a, b, c) in [(1.0, 0.0, 1.0), (0.3, -0.7, 2.0), (-1.5, 0.25, 0.0)] {
        let s = solve_ld(&affine_spec(Mat::new2(a, b, b, c), 8), Arc::new(AbsSym)).unwrap();
        assert!((s.per_volume - frob([[a, b], [b, c]])).abs() < 1e-6);
    }
}

#[test]
fn sqrt1plus_with_zero_data_is_one() {
    let s = solve_ld(&affine_spec(Mat::zeros(2), 8), Arc::new(Sqrt1PlusSym)).unwrap();
    assert!((s.per_volume - 1.0).abs() < 1e-12);
}

#[test]
fn skew_data_costs_nothing_for_symmetric_densities() {
    let s = solve_ld(&affine_spec(Mat::new2(0.0, -2.0, 2.0, 0.0), 8), Arc::new(AbsSym)).unwrap();
    assert!(s.per_volume.abs() < 1e-8);
}

#[test]
fn mueller_identity_has_zero_cell_value() {
    let s = solve_ld(&affine_spec(Mat::identity(2), 8), Arc::new(MuellerH)).unwrap();
    assert!(s.per_volume.abs() < 1e-10);
}

#[test]
fn refining_the_mesh_never_raises_the_envelope() {
    let opts = SolverOptions { multistarts: 2, ..Default::default() };
    let a0 = Mat::new2(1.0, -1.0, 1.0, 1.0);
    let e = bdrelax::density::sq_envelope(Arc::new(MuellerH), &a0, &[4, 8, 16], &opts).unwrap();
    for w in e.samples.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-6, "{:?}", e.samples);
    }
    assert!(e.samples.iter().all(|s| s.1 > 0.05 && s.1 <= 2.0 + 1e-12));
}

#[test]
fn sbd_flat_crack_is_bounded_by_the_straight_cut() {
    let spec = CellSpec::new(
        Aabb::unit_centered(2),
        BoundaryData::jump(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]),
        16,
    );
    let s = solve_sbd(&spec, Arc::new(AbsSym), Arc::new(AbsJump)).unwrap();
    let cut = 0.5f64.sqrt();
    assert!(s.per_volume <= cut * 1.02, "{}", s.per_volume);
    assert!(s.per_volume >= 0.0);
}

#[test]
fn sbd_with_affine_data_and_a_stiff_penalty_matches_ld() {
    let a = Mat::new2(0.5, 0.2, 0.2, -0.3);
    let ld = solve_ld(&affine_spec(a, 8), Arc::new(Sqrt1PlusSym)).unwrap();
    let sbd = solve_sbd(&affine_spec(a, 8), Arc::new(Sqrt1PlusSym), Arc::new(Penalty { k: 1e6 })).unwrap();
    assert!((ld.per_volume - sbd.per_volume).abs() < 1e-4, "{} {}", ld.per_volume, sbd.per_volume);
}

#[test]
fn zero_data_gives_zero() {
    let s = solve_sbd(&affine_spec(Mat::zeros(2), 8), Arc::new(AbsSym), Arc::new(AbsJump)).unwrap();
    assert!(s.per_volume.abs() < 1e-12);
}

#[test]
fn same_seed_same_answer() {
    let opts = SolverOptions { multistarts: 3, seed: 7, ..Default::default() };
    let spec = affine_spec(Mat::new2(1.0, -1.0, 1.0, 1.0), 8).with_solver(opts);
    let a = solve_ld(&spec, Arc::new(MuellerH)).unwrap();
    let b = solve_ld(&spec, Arc::new(MuellerH)).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn argmin_beats_the_affine_interpolant() {
    let a = Mat::new2(1.0, -1.0, 1.0, 1.0);
    let s = solve_ld(&affine_spec(a, 8), Arc::new(MuellerH)).unwrap();
    let h = MuellerH.eval(&[0.0, 0.0], &[0.0, 0.0], &a);
    assert!(s.per_volume <= h + 1e-12);
    assert!((s.argmin.energy(&MuellerH) - s.value).abs() < 1e-10);
}
