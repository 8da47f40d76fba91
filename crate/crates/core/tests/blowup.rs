use bdrelax::bdmodel::{CantorProfile, StructuredBD};
use bdrelax::blowup::{blowup_sequence, normalize_profile, rescale, BlowupFrame, ProfilePair};
use bdrelax::geometry::Aabb;
use proptest::prelude::*;

fn staircase() -> StructuredBD {
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap()
}

#[test]
fn staircase_blowups_fit_the_profile_form() {
    let u = staircase();
    let steps = blowup_sequence(&u, &[0.25, 0.5], &[1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0], 1.0, 32).unwrap();
    for s in &steps {
        assert!(s.residual <= 1e-10, "{}", s.residual);
        assert!(!s.flagged);
        assert!((s.emass - 1.0).abs() < 1e-12);
    }
}

#[test]
fn a_single_jump_blows_up_to_a_single_atom() {
    let u = StructuredBD::two_state(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    let steps = blowup_sequence(&u, &[0.0, 0.3], &[0.5, 0.1], 1.0, 16).unwrap();
    for s in steps {
        assert!(s.residual <= 1e-10);
        assert_eq!(s.fit.atoms.iter().filter(|a| a.1 != 0.0).count(), 1);
    }
}

#[test]
fn triadic_windows_have_exact_unit_mass() {
    let u = staircase();
    let k = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    for level in 0..5 {
        let frame = BlowupFrame::triadic(vec![0.0, 0.0], k.clone(), level).unwrap();
        assert_eq!(rescale(&u, &frame, 4).unwrap().exact_equals_volume, Some(true));
    }
}

#[test]
fn windows_without_mass_are_rejected() {
    let u = staircase();
    let frame = BlowupFrame::new(vec![0.5, 0.5], Aabb::unit_centered(2), 1.0 / 3.0).unwrap();
    assert!(rescale(&u, &frame, 4).is_err());
}

fn pair(atoms: Vec<(f64, f64)>, slope: f64, base: f64, beta_bar: f64, angle: f64, rho: f64) -> ProfilePair {
    ProfilePair {
        atoms: atoms.into_iter().map(|(t, m)| (t * rho, m)).collect(),
        slope,
        base,
        beta_bar,
        eta: vec![1.0, 0.0],
        xi: vec![angle.cos(), angle.sin()],
        rho,
        rigid: None,
    }
}

proptest! {
    #[test]
    fn normalization_is_a_projection(
        atoms in prop::collection::vec((-0.49f64..0.49, -1.0f64..1.0), 0..5),
        slope in -2.0f64..2.0,
        base in -1.0f64..1.0,
        beta_bar in -2.0f64..2.0,
        angle in 0.1f64..3.0,
        rho in 0.5f64..2.0,
    ) {
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let p = pair(atoms, slope, base, beta_bar, angle, rho);
        let n = normalize_profile(&p).unwrap();
        prop_assert!(n.psi.mean().abs() <= 1e-12);
        prop_assert!((n.psi.variation() - n.beta * rho).abs() <= 1e-12);
        let again = normalize_profile(&n.psi).unwrap();
        prop_assert_eq!(again.psi, n.psi);
    }
}
