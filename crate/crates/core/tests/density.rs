use std::sync::Arc;

use bdrelax::cellsolver::integrand::{AbsJump, AbsSym, Sqrt1PlusSym};
use bdrelax::cellsolver::{Integrand, SolverOptions};
use bdrelax::density::{self, JumpForm};
use bdrelax::Mat;

fn odot_norm(dv: [f64; 2], nu: [f64; 2]) -> f64 {
    let m = [
        [dv[0] * nu[0], 0.5 * (dv[0] * nu[1] + dv[1] * nu[0])],
        [0.5 * (dv[1] * nu[0] + dv[0] * nu[1]), dv[1] * nu[1]],
    ];
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn bulk_density_of_a_convex_density_is_the_density() {
    let a = Mat::new2(0.4, 0.1, 0.1, -0.2);
    let e = density::bulk_density(
        Arc::new(Sqrt1PlusSym),
        &[0.0, 0.0],
        &[0.0, 0.0],
        &a,
        &[1.0, 0.5],
        8,
        &SolverOptions::default(),
    )
    .unwrap();
    let exact = (1.0f64 + 0.16 + 0.04 + 0.02).sqrt();
    for s in &e.samples {
        assert!((s.1 - exact).abs() < 1e-8);
    }
}

#[test]
fn oblique_jumps_match_the_closed_form() {
    let opts = SolverOptions::default();
    for (dv, nu) in [([1.0, 0.0], [0.8, 0.6]), ([0.5, -1.0], [0.0, 1.0])] {
        let e = density::jump_density(&JumpForm::Ld(Arc::new(AbsSym)), &[0.0, 0.0], &[0.0, 0.0], &dv, &nu, &[1.0], 16, &opts)
            .unwrap();
        let exact = odot_norm(dv, nu);
        assert!((e.extrapolated - exact).abs() / exact < 0.05, "{} vs {exact}", e.extrapolated);
    }
}

#[test]
fn recession_form_and_sbd_form_agree() {
    let opts = SolverOptions::default();
    let (dv, nu) = ([0.0, 1.0], [1.0, 0.0]);
    let bis = density::jump_density(&JumpForm::Bis(Arc::new(Sqrt1PlusSym)), &[0.0, 0.0], &[0.0, 0.0], &dv, &nu, &[1.0], 16, &opts)
        .unwrap();
    let sbd = density::jump_density(
        &JumpForm::Sbd(Arc::new(AbsSym), Arc::new(AbsJump)),
        &[0.0, 0.0],
        &[0.0, 0.0],
        &dv,
        &nu,
        &[1.0],
        16,
        &opts,
    )
    .unwrap();
    let exact = odot_norm(dv, nu);
    assert!((bis.extrapolated - exact).abs() / exact < 0.05);
    assert!(sbd.extrapolated <= exact * 1.02);
}

#[test]
fn jump_density_rejects_bad_input() {
    let f = JumpForm::Ld(Arc::new(AbsSym));
    let o = SolverOptions::default();
    assert!(density::jump_density(&f, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &[1.0], 16, &o).is_err());
    assert!(density::jump_density(&f, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0], 16, &o).is_err());
    assert!(density::jump_density(&f, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0], 15, &o).is_err());
}

#[test]
fn recession_secants_approach_the_norm() {
    let a = Mat::new2(2.0, 1.0, 1.0, 0.0);
    let f = |x: &[f64], v: &[f64], m: &Mat| Sqrt1PlusSym.eval(x, v, m);
    let e = density::recession(&f, &[0.0, 0.0], &[0.0, 0.0], &a, &[1e2, 1e3, 1e4]).unwrap();
    let norm = (4.0f64 + 2.0).sqrt();
    let errs: Vec<f64> = e.samples.iter().map(|s| (s.1 - norm).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
    assert!(errs[2] < 1e-3);
    assert!(density::recession(&f, &[0.0, 0.0], &[0.0, 0.0], &a, &[10.0, 5.0]).is_err());
}

#[test]
fn convex_densities_pass_the_quasiconvexity_probe() {
    let r = density::check_symmetric_quasiconvexity(&AbsSym, &[0.0, 0.0], &[0.0, 0.0], &Mat::new2(1.0, 0.3, 0.3, -0.5), 20, 1)
        .unwrap();
    assert!(r.worst_deficit >= -1e-9, "{}", r.worst_deficit);
}

#[test]
fn envelope_witness_is_null() {
    let w = density::convex_envelope_witness_a0();
    assert!(w.verified);
    assert_eq!(w.weighted_h, 0.0);
    // h(A₀) by hand: |1−1| + |−1+1| + min(|2|, |−2|) = 2.
    assert_eq!(density::mueller_h(&density::a0()).unwrap(), 2.0);
}
