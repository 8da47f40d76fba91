use std::sync::Arc;

use bdrelax::cellsolver::integrand::{Laminate, LaminatePattern, MuellerH, Sqrt1PlusSym};
use bdrelax::cellsolver::SolverOptions;
use bdrelax::homog::{fhom_dirichlet, fhom_periodic, fold, fold_competitor, fold_identity, HomogSpec};
use bdrelax::{Error, Mat};

#[test]
fn laminate_formulas_agree_on_a_coarse_mesh() {
    let spec = HomogSpec::new(Arc::new(Laminate::new(LaminatePattern::Cos)), Mat::new2(1.0, 0.0, 0.0, 0.0), vec![1, 2, 4], 8);
    let p = fhom_periodic(&spec).unwrap();
    let d = fhom_dirichlet(&spec).unwrap();
    assert!(d.monotone);
    assert!((p - d.extrapolated).abs() / p < 0.02, "{p} vs {}", d.extrapolated);
    // a ≥ 1 and Jensen bound it below; the zero corrector bounds it above.
    let scale = (1e-4f64 + 1.0).sqrt();
    assert!(p >= scale - 1e-9 && p <= 2.0 * scale + 1e-9);
}

#[test]
fn periodic_formula_needs_convexity() {
    let spec = HomogSpec::new(Arc::new(MuellerH), Mat::identity(2), vec![1], 8);
    assert_eq!(fhom_periodic(&spec).unwrap_err(), Error::PeriodicNeedsConvex);
}

#[test]
fn invalid_schedules_are_rejected() {
    let f = Arc::new(Sqrt1PlusSym);
    assert!(HomogSpec::new(f.clone(), Mat::identity(2), vec![2, 1], 8).validate().is_err());
    assert!(HomogSpec::new(f.clone(), Mat::identity(2), vec![1, 2], 4).validate().is_err());
    assert!(HomogSpec::new(f, Mat::new2(0.0, 1.0, 0.0, 0.0), vec![1], 8).validate().is_err());
}

#[test]
fn folding_preserves_energy_and_mass() {
    let f = Arc::new(Sqrt1PlusSym);
    let opts = SolverOptions::default();
    let w = fold_competitor(f.clone(), 0.25, &[1.0, -0.5], 8, &opts).unwrap();
    for j in [1, 2] {
        let r = fold_identity(f.as_ref(), &w, j, 0.25, &[1.0, -0.5], 8 * j).unwrap();
        assert!((r.energy_w - r.energy_wj).abs() < 1e-8);
        assert!((r.emass_w - r.emass_wj).abs() <= 1e-12 * r.emass_w);
    }
    assert!(matches!(fold(&w, 2, 0.25, &[1.0, -0.5], 12), Err(Error::GridMismatch(_))));
}
