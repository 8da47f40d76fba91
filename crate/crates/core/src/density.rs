//! Estimators for relaxed densities: bulk, symmetric quasiconvex envelope,
//! jump, recession, plus the Müller integrand.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cellsolver::integrand::{
    mueller_h_value, rotation_to, EpsScaled, Frozen, MuellerFEps, Rotated, SurfaceWrap, VOffset,
};
use crate::cellsolver::{
    solve_ld, solve_ld_warm, solve_sbd, BoundaryData, CellSpec, GridDisplacement, Integrand,
    SolverOptions, SurfaceIntegrand,
};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::tensor::{odot, vnorm, Mat};

/// Tolerance for the dyadic monotonicity flag.
pub const MONOTONE_TOL: f64 = 1e-6;

/// Values along a refinement schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEstimate {
    /// `(key, value)` with the key an ε, a mesh size, a `t` or a `T`.
    pub samples: Vec<(f64, f64)>,
    pub extrapolated: f64,
    /// `max − min` of the last two samples.
    pub spread: f64,
    pub converged: bool,
    /// True when no sample exceeds its predecessor by more than [`MONOTONE_TOL`].
    pub monotone: bool,
}

impl DensityEstimate {
    pub fn from_samples(samples: Vec<(f64, f64)>, tol: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("empty schedule".into()));
        }
        let n = samples.len();
        let last = samples[n - 1].1;
        let spread = if n >= 2 { (last - samples[n - 2].1).abs() } else { 0.0 };
        let monotone = samples.windows(2).all(|w| w[1].1 <= w[0].1 + MONOTONE_TOL);
        Ok(DensityEstimate {
            samples,
            extrapolated: last,
            spread,
            converged: spread <= tol,
            monotone,
        })
    }

    pub fn last(&self) -> f64 {
        self.samples.last().map(|s| s.1).unwrap_or(f64::NAN)
    }
}

fn at_scale<T>(context: &'static str, eps: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::AtScale {
        context,
        eps,
        source: Box::new(e),
    })
}

fn check_schedule(s: &[f64]) -> Result<()> {
    if s.is_empty() || s.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Validation("schedule entries must be positive".into()));
    }
    Ok(())
}

/// `inf ∫_{Q₁} f₀(x₀, v + ε w, ∇w)` over `w = A y` on `∂Q₁`, per ε.
pub fn bulk_density(
    f0: Arc<dyn Integrand>,
    x0: &[f64],
    v: &[f64],
    a: &Mat,
    schedule: &[f64],
    mesh: usize,
    opts: &SolverOptions,
) -> Result<DensityEstimate> {
    check_schedule(schedule)?;
    if !a.is_symmetric(1e-12) {
        return Err(Error::Validation("bulk density takes a symmetric matrix".into()));
    }
    let cell = Aabb::unit_centered(2);
    let samples: Vec<Result<(f64, f64)>> = schedule
        .par_iter()
        .map(|&eps| {
            let f: Arc<dyn Integrand> = Arc::new(VOffset {
                inner: Arc::new(Frozen { inner: f0.clone(), x0: x0.to_vec() }),
                v: v.to_vec(),
                eps,
            });
            let spec = CellSpec::new(cell.clone(), BoundaryData::affine(*a), mesh).with_solver(opts.clone());
            at_scale("bulk density", eps, solve_ld(&spec, f)).map(|s| (eps, s.per_volume))
        })
        .collect();
    DensityEstimate::from_samples(samples.into_iter().collect::<Result<_>>()?, 1e-4)
}

/// Dirichlet cell values of a `v`-independent density along a mesh schedule;
/// each mesh that refines the previous one starts from its prolonged argmin.
pub fn sq_envelope(
    f0: Arc<dyn Integrand>,
    a: &Mat,
    meshes: &[usize],
    opts: &SolverOptions,
) -> Result<DensityEstimate> {
    sq_envelope_with_fields(f0, a, meshes, opts).map(|(e, _)| e)
}

pub fn sq_envelope_with_fields(
    f0: Arc<dyn Integrand>,
    a: &Mat,
    meshes: &[usize],
    opts: &SolverOptions,
) -> Result<(DensityEstimate, Vec<GridDisplacement>)> {
    if !f0.flags().v_independent {
        return Err(Error::Validation("the envelope needs a v-independent density".into()));
    }
    if meshes.is_empty() {
        return Err(Error::Validation("empty mesh schedule".into()));
    }
    let cell = Aabb::unit_centered(2);
    let mut samples = Vec::new();
    let mut fields: Vec<GridDisplacement> = Vec::new();
    for &m in meshes {
        let spec = CellSpec::new(cell.clone(), BoundaryData::affine(*a), m).with_solver(opts.clone());
        let warm = fields.last().and_then(|prev| {
            let pm = prev.grid.nx;
            (m > pm && m % pm == 0).then(|| prev.prolongate(m / pm))
        });
        let sol = at_scale("envelope", m as f64, solve_ld_warm(&spec, f0.clone(), warm.as_ref()))?;
        samples.push((m as f64, sol.per_volume));
        fields.push(sol.argmin);
    }
    Ok((DensityEstimate::from_samples(samples, 1e-4)?, fields))
}

/// Which cell formula a jump density uses.
#[derive(Clone, Debug)]
pub enum JumpForm {
    /// `ε f₀(x₀, w, ∇w/ε)`.
    Ld(Arc<dyn Integrand>),
    /// `f₀^∞(x₀, w, ∇w)` with the closed-form recession.
    Bis(Arc<dyn Integrand>),
    /// `ε f₁(x₀, w, ∇w/ε)` plus `g₁(x₀, w⁻, w⁺, ν)` on facets.
    Sbd(Arc<dyn Integrand>, Arc<dyn SurfaceIntegrand>),
}

/// Jump density on the cube `Q^ν` with data `u_{v⁻,v⁺,ν}`, per ε.
///
/// The cube is solved in coordinates `y = R z` with `R e₁ = ν`, so the data
/// plane is a mesh line.
#[allow(clippy::too_many_arguments)]
pub fn jump_density(
    form: &JumpForm,
    x0: &[f64],
    vminus: &[f64],
    vplus: &[f64],
    nu: &[f64],
    schedule: &[f64],
    mesh: usize,
    opts: &SolverOptions,
) -> Result<DensityEstimate> {
    check_schedule(schedule)?;
    if nu.len() != 2 || (vnorm(nu) - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("jump normal must be a unit vector in the plane".into()));
    }
    if vminus.len() != 2 || vplus.len() != 2 || vminus == vplus {
        return Err(Error::Validation("jump density needs v⁺ ≠ v⁻".into()));
    }
    if mesh % 2 != 0 {
        return Err(Error::Validation("jump cells need an even mesh".into()));
    }
    let r = rotation_to(nu)?;
    let cell = Aabb::unit_centered(2);
    let data = BoundaryData::jump(vminus, vplus, &[1.0, 0.0]);
    let frozen = |f: &Arc<dyn Integrand>| -> Arc<dyn Integrand> {
        Arc::new(Frozen { inner: f.clone(), x0: x0.to_vec() })
    };
    let keys: Vec<f64> = match form {
        JumpForm::Bis(_) => vec![schedule[schedule.len() - 1]],
        _ => schedule.to_vec(),
    };
    let samples: Vec<Result<(f64, f64)>> = keys
        .par_iter()
        .map(|&eps| {
            let spec = CellSpec::new(cell.clone(), data.clone(), mesh).with_solver(opts.clone());
            let value = match form {
                JumpForm::Ld(f0) => {
                    let f: Arc<dyn Integrand> = Arc::new(Rotated {
                        inner: Arc::new(EpsScaled { inner: frozen(f0), eps }),
                        r,
                    });
                    solve_ld(&spec, f).map(|s| s.per_volume)
                }
                JumpForm::Bis(f0) => {
                    let rec = f0.recession().ok_or_else(|| {
                        Error::Unsupported(format!("{} has no closed-form recession", f0.name()))
                    })?;
                    let f: Arc<dyn Integrand> = Arc::new(Rotated { inner: frozen(&rec), r });
                    solve_ld(&spec, f).map(|s| s.per_volume)
                }
                JumpForm::Sbd(f1, g1) => {
                    let f: Arc<dyn Integrand> = Arc::new(Rotated {
                        inner: Arc::new(EpsScaled { inner: frozen(f1), eps }),
                        r,
                    });
                    let g: Arc<dyn SurfaceIntegrand> = Arc::new(SurfaceWrap {
                        inner: g1.clone(),
                        x0: Some(x0.to_vec()),
                        v: None,
                        scale: 1.0,
                        r: Some(r),
                    });
                    solve_sbd(&spec, f, g).map(|s| s.per_volume)
                }
            };
            at_scale("jump density", eps, value).map(|v| (eps, v))
        })
        .collect();
    DensityEstimate::from_samples(samples.into_iter().collect::<Result<_>>()?, 1e-4)
}

/// Secant slopes `(f(x₀, v, tA) − f(x₀, v, 0)) / t`.
pub fn recession(
    f: &dyn Fn(&[f64], &[f64], &Mat) -> f64,
    x0: &[f64],
    v: &[f64],
    a: &Mat,
    ts: &[f64],
) -> Result<DensityEstimate> {
    if ts.is_empty() || ts.iter().any(|t| !(*t >= 1.0)) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("t-schedule must be increasing and at least 1".into()));
    }
    let f0 = f(x0, v, &Mat::zeros(a.dim()));
    let mut samples = Vec::with_capacity(ts.len());
    for &t in ts {
        let ft = f(x0, v, &(*a * t));
        let s = (ft - f0) / t;
        if !s.is_finite() {
            return Err(Error::IntegrandOverflow(format!("non-finite value at t = {t}")));
        }
        samples.push((t, s));
    }
    DensityEstimate::from_samples(samples, 1e-3)
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiconvexityReport {
    /// `min over trials of ⨍ f(A + e(φ)) − f(A)`.
    pub worst_deficit: f64,
    pub worst_trial: usize,
    pub trials: usize,
}

/// Searches seeded periodic trigonometric fields `φ` for a violation of
/// `f(A) ≤ ⨍_{Q₁} f(A + e(φ))`. A nonnegative result certifies nothing beyond
/// the trials run.
pub fn check_symmetric_quasiconvexity(
    f: &dyn Integrand,
    x0: &[f64],
    v: &[f64],
    a: &Mat,
    trials: usize,
    seed: u64,
) -> Result<QuasiconvexityReport> {
    if trials == 0 {
        return Err(Error::Validation("at least one trial is needed".into()));
    }
    if a.dim() != 2 {
        return Err(Error::Unsupported("periodic test fields are two-dimensional".into()));
    }
    let base = f.eval(x0, v, a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = 48;
    let mut worst = f64::INFINITY;
    let mut worst_trial = 0;
    for trial in 0..trials {
        // φ(y) = Σ_m c_m sin(2π k_m·y + θ_m)
        let modes: Vec<([f64; 2], [f64; 2], f64)> = (0..3)
            .map(|_| {
                let k = [rng.random_range(-2i32..=2) as f64, rng.random_range(-2i32..=2) as f64];
                let k = if k == [0.0, 0.0] { [1.0, 0.0] } else { k };
                let kn = (k[0] * k[0] + k[1] * k[1]).sqrt();
                let amp = 10f64.powf(rng.random_range(-2.0..0.5)) / (2.0 * PI * kn);
                let dir = rng.random_range(0.0..2.0 * PI);
                ([amp * dir.cos(), amp * dir.sin()], k, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let mut mean = 0.0;
        for i in 0..q {
            for j in 0..q {
                let y = [(i as f64 + 0.5) / q as f64, (j as f64 + 0.5) / q as f64];
                let mut g = Mat::zeros(2);
                for (c, k, th) in &modes {
                    let cs = (2.0 * PI * (k[0] * y[0] + k[1] * y[1]) + th).cos() * 2.0 * PI;
                    g += Mat::outer(c, k) * cs;
                }
                mean += f.eval(x0, v, &(*a + g.sym()));
            }
        }
        let deficit = mean / (q * q) as f64 - base;
        if deficit < worst {
            worst = deficit;
            worst_trial = trial;
        }
    }
    Ok(QuasiconvexityReport {
        worst_deficit: worst,
        worst_trial,
        trials,
    })
}

/// `h(A)` for a 2×2 matrix.
pub fn mueller_h(a: &Mat) -> Result<f64> {
    if a.dim() != 2 {
        return Err(Error::WrongDimension { expected: 2, got: a.dim() });
    }
    Ok(mueller_h_value(a))
}

/// `h + ε |sym ·|`.
pub fn mueller_f_eps(eps: f64) -> Result<Arc<dyn Integrand>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation("epsilon must be positive".into()));
    }
    Ok(Arc::new(MuellerFEps { eps }))
}

pub fn a0() -> Mat {
    Mat::new2(1.0, -1.0, 1.0, 1.0)
}

pub fn rotation_j() -> Mat {
    Mat::new2(0.0, -1.0, 1.0, 0.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeWitness {
    /// `(weight, matrix)`.
    pub parts: Vec<(f64, Mat)>,
    pub h_values: Vec<f64>,
    pub weighted_h: f64,
    pub mean: Mat,
    pub verified: bool,
}

/// `A₀ = ½ (2 Id) + ½ (2 J)` with `h` vanishing at both points.
pub fn convex_envelope_witness_a0() -> EnvelopeWitness {
    let parts = vec![(0.5, Mat::identity(2) * 2.0), (0.5, rotation_j() * 2.0)];
    let h_values: Vec<f64> = parts.iter().map(|(_, m)| mueller_h_value(m)).collect();
    let weighted_h = parts.iter().zip(&h_values).map(|((w, _), h)| w * h).sum();
    let mean = parts
        .iter()
        .fold(Mat::zeros(2), |acc, (w, m)| acc + *m * *w);
    let verified = weighted_h == 0.0 && mean == a0();
    EnvelopeWitness {
        parts,
        h_values,
        weighted_h,
        mean,
        verified,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MuellerReport {
    pub h_id: f64,
    pub h_a0: f64,
    pub qh_id: DensityEstimate,
    pub qh_a0: DensityEstimate,
    pub witness: EnvelopeWitness,
    /// `sym Id = sym A₀` while `h(Id) ≠ h(A₀)`.
    pub skew_sensitive: bool,
}

/// Values of `h`, its discrete envelope at `Id` and `A₀`, and the witness.
pub fn mueller_suite(meshes: &[usize], opts: &SolverOptions) -> Result<MuellerReport> {
    let h: Arc<dyn Integrand> = Arc::new(crate::cellsolver::integrand::MuellerH);
    let id = Mat::identity(2);
    let qh_id = sq_envelope(h.clone(), &id, meshes, opts)?;
    let qh_a0 = sq_envelope(h, &a0(), meshes, opts)?;
    let h_id = mueller_h_value(&id);
    let h_a0 = mueller_h_value(&a0());
    Ok(MuellerReport {
        h_id,
        h_a0,
        qh_id,
        qh_a0,
        witness: convex_envelope_witness_a0(),
        skew_sensitive: id.sym() == a0().sym() && h_id != h_a0,
    })
}

/// `|δv ⊙ ν|`, the jump density of `|sym ·|`.
pub fn abs_sym_jump(dv: &[f64], nu: &[f64]) -> f64 {
    odot(dv, nu).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsolver::integrand::{AbsSym, NegQuadraticTrunc, Sqrt1PlusSym};

    #[test]
    fn estimate_bookkeeping() {
        let e = DensityEstimate::from_samples(vec![(8.0, 1.0), (16.0, 0.9), (32.0, 0.85)], 0.1).unwrap();
        assert_eq!(e.extrapolated, 0.85);
        assert!((e.spread - 0.05).abs() < 1e-15);
        assert!(e.converged && e.monotone);
        let one = DensityEstimate::from_samples(vec![(1.0, 3.0)], 0.0).unwrap();
        assert_eq!((one.extrapolated, one.spread), (3.0, 0.0));
        assert!(DensityEstimate::from_samples(vec![], 0.0).is_err());
    }

    #[test]
    fn recession_examples() {
        let a = Mat::new2(1.0, 2.0, 0.0, -1.0);
        let f = |_: &[f64], _: &[f64], m: &Mat| Sqrt1PlusSym.eval(&[0.0, 0.0], &[0.0, 0.0], m);
        let r = recession(&f, &[0.0, 0.0], &[0.0, 0.0], &a, &[1e2, 1e3, 1e4]).unwrap();
        assert!((r.extrapolated - a.sym().norm()).abs() < 1e-3);
        let g = |_: &[f64], _: &[f64], m: &Mat| m.sym().norm() + m.norm().sin();
        let r = recession(&g, &[0.0, 0.0], &[0.0, 0.0], &a, &[1e2, 1e3, 1e4]).unwrap();
        assert!((r.extrapolated - a.sym().norm()).abs() < 1e-3);
        let h = |_: &[f64], _: &[f64], m: &Mat| mueller_h_value(m);
        let r = recession(&h, &[0.0, 0.0], &[0.0, 0.0], &a0(), &[1.0, 2.0, 7.0]).unwrap();
        assert!(r.samples.iter().all(|s| s.1 == 2.0));
        assert!(recession(&h, &[0.0, 0.0], &[0.0, 0.0], &a0(), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn quasiconvexity_search() {
        let a = Mat::new2(0.3, 0.1, 0.1, -0.2);
        let r = check_symmetric_quasiconvexity(&AbsSym, &[0.0, 0.0], &[0.0, 0.0], &a, 20, 1).unwrap();
        assert!(r.worst_deficit >= -1e-8);
        let r = check_symmetric_quasiconvexity(&NegQuadraticTrunc, &[0.0, 0.0], &[0.0, 0.0], &Mat::zeros(2), 100, 1)
            .unwrap();
        assert!(r.worst_deficit < 0.0);
        let z = check_symmetric_quasiconvexity(&AbsSym, &[0.0, 0.0], &[0.0, 0.0], &Mat::zeros(2), 10, 2).unwrap();
        assert!(z.worst_deficit >= 0.0);
    }

    #[test]
    fn mueller_values_and_witness() {
        assert_eq!(mueller_h(&Mat::identity(2)).unwrap(), 0.0);
        assert_eq!(mueller_h(&a0()).unwrap(), 2.0);
        assert_eq!(mueller_h(&(Mat::identity(2) * 2.0)).unwrap(), 0.0);
        assert_eq!(mueller_h(&(rotation_j() * 2.0)).unwrap(), 0.0);
        assert!(mueller_h(&Mat::identity(3)).is_err());
        let w = convex_envelope_witness_a0();
        assert!(w.verified);
        assert_eq!(w.h_values, vec![0.0, 0.0]);
    }
}
