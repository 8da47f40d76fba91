//! Projection onto infinitesimal rigid motions and Korn-Poincaré diagnostics.

use serde::Serialize;

use crate::bdmodel::StructuredBD;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, FACE_TOL};
use crate::quadrature::{gauss_legendre, integrate_box};
use crate::tensor::{vdot, Mat};

/// `x ↦ L x + v` with `L` skew.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidMotion {
    pub l: Mat,
    pub v: Vec<f64>,
}

impl RigidMotion {
    pub fn new(l: Mat, v: Vec<f64>) -> Result<Self> {
        if !l.is_skew(1e-12) {
            return Err(Error::Validation("rigid motion needs a skew matrix".into()));
        }
        if v.len() != l.dim() {
            return Err(Error::WrongDimension {
                expected: l.dim(),
                got: v.len(),
            });
        }
        Ok(RigidMotion { l, v })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.l
            .mul_vec(x)
            .iter()
            .zip(&self.v)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// `b_K[u]`, the mean of `u` over `K`.
pub fn b_k(u: &StructuredBD, k: &Aabb) -> Result<Vec<f64>> {
    u.mean(k)
}

/// `M_K[u] = (2|K|)⁻¹ ∮_{∂K} (u ⊗ ν − ν ⊗ u)`, faces split into `segments`
/// pieces (and at every discontinuity) with two-point Gauss on each piece.
pub fn m_k_boundary(u: &StructuredBD, k: &Aabb, segments: usize) -> Result<Mat> {
    let n = u.dim();
    if k.dim() != n {
        return Err(Error::WrongDimension {
            expected: n,
            got: k.dim(),
        });
    }
    if n != 2 {
        return Err(Error::Unsupported(
            "boundary moment is implemented in two dimensions".into(),
        ));
    }
    let planes = u.discontinuity_planes();
    for (nu, c) in &planes {
        if let Some((d, s)) = Aabb::axis_of(nu) {
            let t = c * s;
            let scale = 1.0 + k.lo[d].abs().max(k.hi[d].abs());
            if (t - k.lo[d]).abs() <= FACE_TOL * scale || (t - k.hi[d]).abs() <= FACE_TOL * scale {
                return Err(Error::BoundaryChargedFace(format!(
                    "plane x[{d}] = {t} contains a face"
                )));
            }
        }
    }
    let (gx, gw) = gauss_legendre(2);
    let segments = segments.max(1);
    let mut acc = Mat::zeros(2);
    // (fixed axis, fixed value, outward sign)
    for d in 0..2 {
        for (val, sign) in [(k.lo[d], -1.0), (k.hi[d], 1.0)] {
            let t_axis = 1 - d;
            let (a, b) = (k.lo[t_axis], k.hi[t_axis]);
            let mut cuts: Vec<f64> = (0..=segments)
                .map(|i| a + (b - a) * i as f64 / segments as f64)
                .collect();
            for (nu, c) in &planes {
                // Solve ν_d val + ν_t s = c along the face.
                if nu[t_axis] != 0.0 {
                    let s = (c - nu[d] * val) / nu[t_axis];
                    if s > a && s < b {
                        cuts.push(s);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut int = [0.0; 2];
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (x, wt) in gx.iter().zip(&gw) {
                    let mut p = [0.0; 2];
                    p[d] = val;
                    p[t_axis] = mid + half * x;
                    let uv = u.eval(&p);
                    int[0] += half * wt * uv[0];
                    int[1] += half * wt * uv[1];
                }
            }
            let mut nu = [0.0; 2];
            nu[d] = sign;
            acc += Mat::outer(&int, &nu) - Mat::outer(&nu, &int);
        }
    }
    Ok(acc * (0.5 / k.volume()))
}

/// `(Du(K) − Du(K)ᵗ) / (2|K|)` with the absolutely continuous part integrated
/// by 2×2 Gauss on `cells` cells per axis and plane parts summed exactly.
pub fn m_k_volume(u: &StructuredBD, k: &Aabb, cells: usize) -> Result<Mat> {
    let n = u.dim();
    let exact = u.du_value(k)?;
    let mut ac_exact = Mat::zeros(n);
    let mut ac_quad = Mat::zeros(n);
    if !u.smooth_is_affine() {
        let smooth_only = StructuredBD::new(n, u.smooth().to_vec(), vec![], None)?;
        ac_exact = smooth_only.du_value(k)?;
        for i in 0..n {
            for j in 0..n {
                ac_quad[(i, j)] = integrate_box(&k.lo, &k.hi, &vec![vec![]; n], cells.max(1), 2, &mut |x| {
                    smooth_only.grad_ac(x)[(i, j)]
                });
            }
        }
    }
    let du = exact - ac_exact + ac_quad;
    Ok((du - du.transpose()) * (0.5 / k.volume()))
}

/// Exact `M_K[u]`.
pub fn m_k(u: &StructuredBD, k: &Aabb) -> Result<Mat> {
    let du = u.du_value(k)?;
    Ok((du - du.transpose()) * (0.5 / k.volume()))
}

/// `ℜ_K[u](y) = M_K (y − x_K) + b_K` with `x_K` the center of `K`.
pub fn rigid_projection(u: &StructuredBD, k: &Aabb) -> Result<RigidMotion> {
    let m = m_k(u, k)?;
    let b = b_k(u, k)?;
    let shift = m.mul_vec(&k.center());
    let v = b.iter().zip(&shift).map(|(b, s)| b - s).collect();
    Ok(RigidMotion { l: m, v })
}

/// `u − ℜ_K[u]`.
pub fn project_out_rigid(u: &StructuredBD, k: &Aabb) -> Result<StructuredBD> {
    let r = rigid_projection(u, k)?;
    Ok(u.plus_affine(-r.l, r.v.iter().map(|x| -x).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KornRow {
    pub eps: f64,
    pub l1_residual: f64,
    pub ev_mass: f64,
    pub ratio: f64,
}

/// `‖u − ℜ_{x+εK}[u]‖_{L¹(x+εK)} / (ε |Eu|(x+εK))` along the schedule.
pub fn korn_ratio(u: &StructuredBD, k: &Aabb, x: &[f64], schedule: &[f64]) -> Result<Vec<KornRow>> {
    let breaks = u.axis_breaks();
    let oblique = !u.discontinuities_axis_aligned();
    schedule
        .iter()
        .map(|&eps| {
            let w = k.scaled_about(x, eps)?;
            let ev = u.total_variation(&w)?;
            if ev <= 1e-14 * w.volume() {
                return Err(Error::RigidOnWindow(eps));
            }
            let r = rigid_projection(u, &w)?;
            let n = u.dim();
            let pieces = if oblique { 64 } else if n == 2 { 8 } else { 3 };
            let l1 = integrate_box(&w.lo, &w.hi, &breaks, pieces, 6, &mut |y| {
                let a = u.eval(y);
                let b = r.eval(y);
                let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
                vdot(&d, &d).sqrt()
            });
            Ok(KornRow {
                eps,
                l1_residual: l1,
                ev_mass: ev,
                ratio: l1 / (eps * ev),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdmodel::{sinusoid, CantorProfile, SmoothTerm};
    use crate::tensor::unit;
    use approx::assert_abs_diff_eq;

    fn skew(a: f64) -> Mat {
        Mat::new2(0.0, -a, a, 0.0)
    }

    #[test]
    fn rigid_fields_are_fixed() {
        let k = Aabb::new(vec![-0.2, 0.1], vec![0.7, 0.6]).unwrap();
        let u = StructuredBD::affine(skew(1.3), vec![0.4, -2.0]).unwrap();
        let r = rigid_projection(&u, &k).unwrap();
        assert!((r.l - skew(1.3)).max_abs() < 1e-14);
        for x in [[0.0, 0.0], [0.3, 0.5]] {
            let (a, b) = (u.eval(&x), r.eval(&x));
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
        let mb = m_k_boundary(&u, &k, 1).unwrap();
        assert!((mb - skew(1.3)).max_abs() < 1e-14);
    }

    #[test]
    fn means_of_simple_fields() {
        let k = Aabb::new(vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        let a = Mat::new2(1.0, 2.0, -1.0, 3.0);
        let u = StructuredBD::affine(a, vec![0.5, 0.25]).unwrap();
        let m = b_k(&u, &k).unwrap();
        // v + A x_c with x_c = (1, 1.5)
        assert_abs_diff_eq!(m[0], 0.5 + 1.0 + 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[1], 0.25 - 1.0 + 4.5, epsilon = 1e-14);
        let c = Aabb::unit_centered(2);
        let l = StructuredBD::affine(skew(2.0), vec![0.0, 0.0]).unwrap();
        assert_eq!(b_k(&l, &c).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn symmetric_affine_has_no_skew_moment() {
        let u = StructuredBD::affine(Mat::new2(1.0, 0.3, 0.3, -2.0), vec![1.0, 1.0]).unwrap();
        let k = Aabb::unit_centered(2);
        assert!(m_k_boundary(&u, &k, 4).unwrap().max_abs() < 1e-15);
        assert!(m_k(&u, &k).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn jump_moment_matches_atom_arithmetic() {
        let dv = [0.3, 1.0];
        let nu = [0.6, 0.8];
        let u = StructuredBD::two_state(&[0.0, 0.0], &dv, &nu, &[0.0, 0.0]).unwrap();
        let k = Aabb::unit_centered(2);
        let area = k.plane_section(&nu, 0.0).unwrap();
        let expected = (Mat::outer(&dv, &nu) - Mat::outer(&nu, &dv)) * (area / 2.0);
        assert!((m_k_volume(&u, &k, 4).unwrap() - expected).max_abs() < 1e-14);
        assert!((m_k_boundary(&u, &k, 4).unwrap() - expected).max_abs() < 1e-14);
        let face = StructuredBD::two_state(&[0.0, 0.0], &dv, &unit(2, 0), &[0.5, 0.0]).unwrap();
        assert!(matches!(m_k_boundary(&face, &k, 4), Err(Error::BoundaryChargedFace(_))));
    }

    #[test]
    fn projection_is_idempotent_and_keeps_strain() {
        let st = CantorProfile { depth: 5, total_mass: 1.0, support: (-0.4, 0.4) };
        let u = StructuredBD::staircase(unit(2, 0), vec![0.6, 0.8], &st)
            .unwrap()
            .sum(&StructuredBD::new(2, vec![sinusoid(vec![1.0, 0.5], vec![1.0, 2.0], 0.1)], vec![], None).unwrap())
            .unwrap();
        let k = Aabb::new(vec![-0.5, -0.3], vec![0.5, 0.6]).unwrap();
        let p = project_out_rigid(&u, &k).unwrap();
        assert!(b_k(&p, &k).unwrap().iter().all(|x| x.abs() < 1e-12));
        assert!(m_k(&p, &k).unwrap().max_abs() < 1e-12);
        let pp = project_out_rigid(&p, &k).unwrap();
        for y in [[0.1, 0.2], [-0.3, 0.0]] {
            let (a, b) = (p.eval(&y), pp.eval(&y));
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        assert_abs_diff_eq!(
            p.total_variation(&k).unwrap(),
            u.total_variation(&k).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn boundary_and_volume_moments_converge_together() {
        let u = StructuredBD::new(
            2,
            vec![
                sinusoid(vec![0.7, -0.4], vec![1.1, 0.6], 0.3),
                SmoothTerm::Quadratic { h: vec![Mat::new2(1.0, 2.0, 2.0, 0.0), Mat::new2(-1.0, 0.0, 0.0, 1.0)] },
            ],
            vec![],
            None,
        )
        .unwrap();
        let k = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let d16 = (m_k_boundary(&u, &k, 16).unwrap() - m_k_volume(&u, &k, 16).unwrap()).norm();
        let d32 = (m_k_boundary(&u, &k, 32).unwrap() - m_k_volume(&u, &k, 32).unwrap()).norm();
        assert!((d16 / d32).log2() >= 1.8, "{d16} {d32}");
        assert!((m_k_boundary(&u, &k, 64).unwrap() - m_k(&u, &k).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn korn_ratio_scales_for_symmetric_affine() {
        let u = StructuredBD::affine(Mat::new2(2.0, 0.5, 0.5, 1.0), vec![0.0, 0.0]).unwrap();
        let k = Aabb::unit_centered(2);
        let rows = korn_ratio(&u, &k, &[0.0, 0.0], &[1.0, 0.5, 0.25]).unwrap();
        for r in &rows {
            assert!((r.ratio - rows[0].ratio).abs() < 1e-6);
        }
        let rigid = StructuredBD::affine(skew(1.0), vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            korn_ratio(&rigid, &k, &[0.0, 0.0], &[1.0]),
            Err(Error::RigidOnWindow(_))
        ));
    }
}
