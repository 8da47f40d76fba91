//! Integral representation of the relaxed energy for structured fields, and
//! its comparison with smooth energies along mollified sequences.

use rayon::prelude::*;
use serde::Serialize;

use crate::bdmodel::{SmoothTerm, StructuredBD};
use crate::cellsolver::Integrand;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::quadrature::{gauss_legendre, integrate_box};
use crate::tensor::{odot, vdot, Mat};

/// `(x, v, e) ↦ f`.
pub type BulkFn<'a> = &'a (dyn Fn(&[f64], &[f64], &Mat) -> f64 + Sync);
/// `(x, u⁻, u⁺, ν) ↦ g`.
pub type SurfaceFn<'a> = &'a (dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> f64 + Sync);
/// `(x, u(x), polar) ↦ f^∞`.
pub type CantorFn<'a> = &'a (dyn Fn(&[f64], &[f64], &Mat) -> f64 + Sync);

#[derive(Clone, Copy)]
pub struct Densities<'a> {
    pub f: BulkFn<'a>,
    pub g: SurfaceFn<'a>,
    pub finf: CantorFn<'a>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Representation {
    pub bulk: f64,
    pub jump: f64,
    pub cantor: f64,
    pub total: f64,
}

/// The segment `{x·ν = c} ∩ box` as `p0 + s τ`, `s ∈ [s0, s1]`.
fn segment(b: &Aabb, normal: &[f64], offset: f64) -> Result<Option<([f64; 2], [f64; 2], f64, f64)>> {
    if b.plane_section(normal, offset)? <= 0.0 {
        return Ok(None);
    }
    let p0 = [normal[0] * offset, normal[1] * offset];
    let dir = [-normal[1], normal[0]];
    let (mut s0, mut s1) = (f64::NEG_INFINITY, f64::INFINITY);
    for d in 0..2 {
        if dir[d] == 0.0 {
            continue;
        }
        let (a, c) = ((b.lo[d] - p0[d]) / dir[d], (b.hi[d] - p0[d]) / dir[d]);
        s0 = s0.max(a.min(c));
        s1 = s1.min(a.max(c));
    }
    Ok((s1 > s0).then_some((p0, dir, s0, s1)))
}

/// `∫` of `h` along the segment, split where other planes cross it.
fn integrate_segment(
    seg: ([f64; 2], [f64; 2], f64, f64),
    planes: &[(Vec<f64>, f64)],
    pieces: usize,
    h: &mut dyn FnMut(&[f64]) -> f64,
) -> f64 {
    let (p0, dir, s0, s1) = seg;
    let mut cuts: Vec<f64> = planes
        .iter()
        .filter_map(|(n, c)| {
            let dn = dir[0] * n[0] + dir[1] * n[1];
            (dn.abs() > 1e-14).then(|| (c - (p0[0] * n[0] + p0[1] * n[1])) / dn)
        })
        .filter(|s| *s > s0 && *s < s1)
        .collect();
    cuts.push(s0);
    cuts.push(s1);
    cuts.sort_by(|a, b| a.total_cmp(b));
    let (gx, gw) = gauss_legendre(6);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let step = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let mid = w[0] + (p as f64 + 0.5) * step;
            for (x, wt) in gx.iter().zip(&gw) {
                let s = mid + 0.5 * step * x;
                total += 0.5 * step * wt * h(&[p0[0] + s * dir[0], p0[1] + s * dir[1]]);
            }
        }
    }
    total
}

/// `∫_B f(x, u, e(u)) + ∫_{J_u ∩ B} g(x, u⁻, u⁺, ν) + ∫_B f^∞(x, u, polar) d|E^c u|`.
///
/// On the finite-depth profile the Cantor term evaluates `u` at each atom as
/// `(u⁻ + u⁺)/2`.
pub fn assemble(u: &StructuredBD, b: &Aabb, d: &Densities, quad: usize) -> Result<Representation> {
    let n = u.dim();
    if b.dim() != n {
        return Err(Error::WrongDimension { expected: n, got: b.dim() });
    }
    if quad == 0 {
        return Err(Error::Validation("quadrature resolution must be positive".into()));
    }
    let breaks = u.axis_breaks();
    let pieces = if u.discontinuities_axis_aligned() { quad } else { 8 * quad };
    let bulk = integrate_box(&b.lo, &b.hi, &breaks, pieces, 6, &mut |x| {
        (d.f)(x, &u.eval(x), &u.strain_ac(x))
    });
    let planes = u.discontinuity_planes();
    if planes.is_empty() {
        return Ok(Representation { bulk, jump: 0.0, cantor: 0.0, total: bulk });
    }
    if n != 2 {
        return Err(Error::Unsupported("surface terms are integrated in two dimensions".into()));
    }
    let mut jump = 0.0;
    for (idx, j) in u.jumps().iter().enumerate() {
        let Some(seg) = segment(b, &j.normal, j.offset)? else { continue };
        let mut err = None;
        jump += integrate_segment(seg, &planes, quad, &mut |x| match u.trace_pair_at(idx, x) {
            Ok((m, p, nu)) => (d.g)(x, &m, &p, &nu),
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    let mut cantor = 0.0;
    let e = u.emeasure();
    if let Some(p) = u.profile() {
        for (atom, (_, m)) in e.singular_atoms.iter().zip(p.atoms.iter().filter(|(_, m)| *m != 0.0)) {
            let Some(seg) = segment(b, &atom.normal, atom.location)? else { continue };
            cantor += atom.mass
                * integrate_segment(seg, &planes, quad, &mut |x| {
                    // u is right-continuous across the atom: u(x) = u⁺.
                    let mut v = u.eval(x);
                    for (vi, xi) in v.iter_mut().zip(&p.xi) {
                        *vi -= 0.5 * m * xi;
                    }
                    (d.finf)(x, &v, &atom.polar)
                });
        }
    }
    let total = bulk + jump + cantor;
    if [bulk, jump, cantor].iter().any(|x| !x.is_finite() || *x < -1e-12) {
        return Err(Error::IntegrandOverflow("representation terms must be finite and nonnegative".into()));
    }
    Ok(Representation { bulk, jump, cantor, total })
}

/// Representation with `f = f₀`, `g = f₀(δv ⊗ ν)` and `f^∞ = f₀` for a
/// convex, `v`-independent, one-homogeneous `f₀`.
pub fn assemble_homogeneous(u: &StructuredBD, b: &Aabb, f0: &dyn Integrand, quad: usize) -> Result<Representation> {
    check_homogeneous(f0)?;
    let f = |x: &[f64], v: &[f64], e: &Mat| f0.eval(x, v, e);
    let g = |x: &[f64], m: &[f64], p: &[f64], nu: &[f64]| {
        let dv: Vec<f64> = p.iter().zip(m).map(|(a, b)| a - b).collect();
        f0.eval(x, m, &odot(&dv, nu))
    };
    let finf = |x: &[f64], v: &[f64], polar: &Mat| f0.eval(x, v, polar);
    assemble(u, b, &Densities { f: &f, g: &g, finf: &finf }, quad)
}

fn check_homogeneous(f0: &dyn Integrand) -> Result<()> {
    let fl = f0.flags();
    if !(fl.convex && fl.v_independent && fl.one_homogeneous) {
        return Err(Error::Validation(format!(
            "{} must be convex, v-independent and one-homogeneous",
            f0.name()
        )));
    }
    Ok(())
}

/// `(1/w) max(0, 1 − |s|/w)`.
fn hat(s: f64, w: f64) -> f64 {
    (1.0 - s.abs() / w).max(0.0) / w
}

/// Fourier multiplier of the hat kernel at frequency `k`.
fn hat_multiplier(k: f64, w: f64) -> f64 {
    let z = 0.5 * k * w;
    if z.abs() < 1e-8 {
        1.0
    } else {
        (z.sin() / z).powi(2)
    }
}

/// `e(u * ρ_w)` for the tensor-product hat `ρ_w` of half-width `w`.
struct Mollified {
    terms: Vec<(StructuredBD, f64)>,
    slope: Mat,
    planes: Vec<(Vec<f64>, f64, Mat)>,
    w: f64,
}

impl Mollified {
    fn new(u: &StructuredBD, w: f64) -> Result<Self> {
        if !u.discontinuities_axis_aligned() {
            return Err(Error::Unsupported("mollification handles axis-aligned planes only".into()));
        }
        let n = u.dim();
        let terms = u
            .smooth()
            .iter()
            .map(|t| {
                let factor = match t {
                    SmoothTerm::Sinusoid { k, .. } => k.iter().map(|kd| hat_multiplier(*kd, w)).product(),
                    _ => 1.0,
                };
                StructuredBD::new(n, vec![t.clone()], vec![], None).map(|f| (f, factor))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut planes: Vec<(Vec<f64>, f64, Mat)> = u
            .jumps()
            .iter()
            .map(|j| (j.normal.clone(), j.offset, odot(&j.delta, &j.normal)))
            .collect();
        let mut slope = Mat::zeros(n);
        if let Some(p) = u.profile() {
            slope = odot(&p.eta, &p.xi) * p.beta;
            let e = odot(&p.xi, &p.eta);
            planes.extend(p.atoms.iter().map(|(t, m)| (p.eta.clone(), *t, e * *m)));
        }
        Ok(Mollified { terms, slope, planes, w })
    }

    fn strain(&self, x: &[f64]) -> Mat {
        let mut e = self.slope;
        for (t, factor) in &self.terms {
            e += t.strain_ac(x) * *factor;
        }
        for (nrm, c, m) in &self.planes {
            let h = hat(vdot(x, nrm) - c, self.w);
            if h != 0.0 {
                e += *m * h;
            }
        }
        e
    }

    fn breaks(&self, n: usize) -> Vec<Vec<f64>> {
        let mut br = vec![Vec::new(); n];
        for (nrm, c, _) in &self.planes {
            if let Some((k, s)) = Aabb::axis_of(nrm) {
                let t = c * s;
                br[k].extend([t - self.w, t, t + self.w]);
            }
        }
        br
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UpperCheck {
    /// `(level, F₀(u * ρ_{2^{−level}}))`.
    pub levels: Vec<(u32, f64)>,
    pub representation: Representation,
}

/// Smooth energies `∫_B f₀(x, u, e(u * ρ_w))`, `w = 2^{−level}`, against the
/// representation. `f₀` is `v`-independent, so the unmollified `u` is passed
/// as the state argument.
pub fn relaxation_upper_check(
    u: &StructuredBD,
    f0: &dyn Integrand,
    b: &Aabb,
    levels: &[u32],
    quad: usize,
) -> Result<UpperCheck> {
    check_homogeneous(f0)?;
    let representation = assemble_homogeneous(u, b, f0, quad)?;
    let n = u.dim();
    let values = levels
        .par_iter()
        .map(|&level| {
            let w = 0.5f64.powi(level as i32);
            let m = Mollified::new(u, w)?;
            let mut br = m.breaks(n);
            for (k, extra) in u.axis_breaks().into_iter().enumerate() {
                br[k].extend(extra);
            }
            let v = integrate_box(&b.lo, &b.hi, &br, quad, 4, &mut |x| f0.eval(x, &u.eval(x), &m.strain(x)));
            Ok((level, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UpperCheck { levels: values, representation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdmodel::CantorProfile;
    use crate::cellsolver::integrand::AbsSym;

    #[test]
    fn affine_bulk_only() {
        let a = Mat::new2(1.0, 2.0, 0.0, -1.0);
        let u = StructuredBD::affine(a, vec![0.0, 0.0]).unwrap();
        let b = Aabb::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let r = assemble_homogeneous(&u, &b, &AbsSym, 4).unwrap();
        assert!((r.bulk - 2.0 * a.sym().norm()).abs() < 1e-12);
        assert_eq!((r.jump, r.cantor), (0.0, 0.0));
    }

    #[test]
    fn jump_and_cantor_terms() {
        let u = StructuredBD::two_state(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let b = Aabb::unit_centered(2);
        let r = assemble_homogeneous(&u, &b, &AbsSym, 4).unwrap();
        assert!((r.total - 0.5f64.sqrt()).abs() < 1e-12);
        let stair = CantorProfile { depth: 5, total_mass: 1.0, support: (-0.5, 0.5) };
        let s = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap();
        let r = assemble_homogeneous(&s, &b, &AbsSym, 4).unwrap();
        assert!((r.cantor - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(r.bulk.abs() < 1e-15 && r.jump == 0.0);
    }

    #[test]
    fn charged_face_is_rejected() {
        let u = StructuredBD::two_state(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.0]).unwrap();
        assert!(assemble_homogeneous(&u, &Aabb::unit_centered(2), &AbsSym, 4).is_err());
    }

    #[test]
    fn mollified_sinusoid_multiplier() {
        assert_eq!(hat_multiplier(0.0, 0.5), 1.0);
        // ∫ hat(s) cos(ks) ds against the closed form.
        let (k, w) = (7.0, 0.3);
        let (gx, gw) = gauss_legendre(20);
        let mut num = 0.0;
        for half in [-1.0, 1.0] {
            for (x, wt) in gx.iter().zip(&gw) {
                let s = half * 0.5 * w * (1.0 + x);
                num += 0.5 * w * wt * hat(s, w) * (k * s).cos();
            }
        }
        assert!((num - hat_multiplier(k, w)).abs() < 1e-12);
    }
}
