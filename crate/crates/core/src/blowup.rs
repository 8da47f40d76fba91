//! Rescaled maps `u_{K,x,ε}`, exact mass normalization and the profile
//! normalization algebra.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::bdmodel::StructuredBD;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::rigid::{project_out_rigid, RigidMotion};
use crate::tensor::{odot, vdot, vnorm, BaseChange, Mat};

fn rat(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Validation(format!("non-finite value {x}")))
}

/// Base point, box and scale of a blow-up.
#[derive(Clone, Debug)]
pub struct BlowupFrame {
    pub x: Vec<f64>,
    pub k: Aabb,
    pub eps: BigRational,
}

impl BlowupFrame {
    pub fn new(x: Vec<f64>, k: Aabb, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Validation("blow-up scale must be positive".into()));
        }
        BlowupFrame::exact(x, k, rat(eps)?)
    }

    /// `ε = 3⁻ˡᵉᵛᵉˡ`, held exactly.
    pub fn triadic(x: Vec<f64>, k: Aabb, level: u32) -> Result<Self> {
        let eps = BigRational::new(BigInt::one(), BigInt::from(3u64.pow(level)));
        BlowupFrame::exact(x, k, eps)
    }

    pub fn exact(x: Vec<f64>, k: Aabb, eps: BigRational) -> Result<Self> {
        if x.len() != k.dim() {
            return Err(Error::WrongDimension {
                expected: k.dim(),
                got: x.len(),
            });
        }
        if !eps.is_positive() {
            return Err(Error::Validation("blow-up scale must be positive".into()));
        }
        Ok(BlowupFrame { x, k, eps })
    }

    pub fn eps_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self.eps).unwrap_or(f64::NAN)
    }

    /// `K(x, ε) = x + ε K`.
    pub fn window(&self) -> Result<Aabb> {
        let (lo, hi) = self.window_exact()?;
        let f = |v: &[BigRational]| -> Vec<f64> {
            v.iter().map(|q| num_traits::ToPrimitive::to_f64(q).unwrap_or(f64::NAN)).collect()
        };
        Aabb::new(f(&lo), f(&hi))
    }

    fn window_exact(&self) -> Result<(Vec<BigRational>, Vec<BigRational>)> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for d in 0..self.x.len() {
            let x = rat(self.x[d])?;
            lo.push(&x + &self.eps * rat(self.k.lo[d])?);
            hi.push(&x + &self.eps * rat(self.k.hi[d])?);
        }
        Ok((lo, hi))
    }

    /// `|Eu|(K(x,ε)) / |K(x,ε)|`.
    pub fn normalization(&self, u: &StructuredBD) -> Result<f64> {
        let w = self.window()?;
        let mass = u.total_variation(&w)?;
        if !(mass > 0.0) {
            return Err(Error::RigidWindow(self.eps_f64()));
        }
        Ok(mass / w.volume())
    }
}

/// Per polar-norm class, the rational factor multiplying it in `|Eu|(box)`.
type MassClasses = BTreeMap<u64, BigRational>;

/// Exact `|Eu|` of a box split by polar-norm class, for fields with constant
/// strain density and axis-aligned discontinuities. `map` sends a plane
/// offset `c` with normal `±e_k` to the coordinates the box lives in.
fn mass_classes(
    u: &StructuredBD,
    lo: &[BigRational],
    hi: &[BigRational],
    ac_factor: &BigRational,
    map: &dyn Fn(usize, &BigRational) -> BigRational,
) -> Result<MassClasses> {
    if !u.smooth_is_affine() {
        return Err(Error::Unsupported("exact mass needs a constant strain density".into()));
    }
    let n = u.dim();
    let e = u.emeasure();
    let mut classes = MassClasses::new();
    let vol: BigRational = (0..n).map(|d| &hi[d] - &lo[d]).product();
    let ac = e.ac_density(&vec![0.0; n]).norm();
    if ac > 0.0 {
        *classes.entry(ac.to_bits()).or_insert_with(BigRational::zero) += vol * ac_factor;
    }
    // Plane groups keyed by (axis, exact offset) with summed densities.
    let mut groups: BTreeMap<(usize, BigRational), Mat> = BTreeMap::new();
    let items = e
        .jump_atoms
        .iter()
        .map(|a| (&a.normal, a.offset, a.polar * a.density))
        .chain(e.singular_atoms.iter().map(|a| (&a.normal, a.location, a.polar * a.mass)));
    for (normal, offset, dens) in items {
        let (k, s) = Aabb::axis_of(normal)
            .ok_or_else(|| Error::Unsupported("exact mass needs axis-aligned planes".into()))?;
        let c = rat(offset * s)?;
        *groups.entry((k, map(k, &c))).or_insert_with(|| Mat::zeros(n)) += dens;
    }
    for ((k, c), dens) in groups {
        if c < lo[k] || c > hi[k] {
            continue;
        }
        let norm = dens.norm();
        if norm == 0.0 {
            continue;
        }
        if c == lo[k] || c == hi[k] {
            return Err(Error::BoundaryChargedBox(format!("plane x_{} = {} on a face", k + 1, c)));
        }
        let section: BigRational = (0..n).filter(|&d| d != k).map(|d| &hi[d] - &lo[d]).product();
        *classes.entry(norm.to_bits()).or_insert_with(BigRational::zero) += section;
    }
    Ok(classes)
}

/// Exact `|Eu_{K,x,ε}|(K)`.
///
/// `|Eu|(K(x,ε))` is computed in `x` coordinates and `|E[u(x + ε·)]|(K)` in
/// `y` coordinates, both class by class; the two agree up to `ε^{n−1}` in every
/// class, so the normalized mass is `ε^{−n} |K(x,ε)|`.
pub fn exact_rescaled_mass(u: &StructuredBD, frame: &BlowupFrame) -> Result<BigRational> {
    let n = u.dim();
    let eps = &frame.eps;
    let (xlo, xhi) = frame.window_exact()?;
    let klo: Vec<BigRational> = frame.k.lo.iter().map(|v| rat(*v)).collect::<Result<_>>()?;
    let khi: Vec<BigRational> = frame.k.hi.iter().map(|v| rat(*v)).collect::<Result<_>>()?;
    let xr: Vec<BigRational> = frame.x.iter().map(|v| rat(*v)).collect::<Result<_>>()?;
    let in_x = mass_classes(u, &xlo, &xhi, &BigRational::one(), &|_, c| c.clone())?;
    let in_y = mass_classes(u, &klo, &khi, eps, &|k, c| (c - &xr[k]) / eps)?;
    if in_x.is_empty() {
        return Err(Error::RigidWindow(frame.eps_f64()));
    }
    let scale = num_traits::pow(eps.clone(), n - 1);
    let agree = in_x.len() == in_y.len()
        && in_x
            .iter()
            .all(|(key, q)| in_y.get(key).map(|p| p * &scale == *q).unwrap_or(false));
    if !agree {
        return Err(Error::HypothesisViolated("window and rescaled masses disagree".into()));
    }
    let vol_x: BigRational = (0..n).map(|d| &xhi[d] - &xlo[d]).product();
    Ok(vol_x / num_traits::pow(eps.clone(), n))
}

#[derive(Clone, Debug, Serialize)]
pub struct Rescaled {
    pub eps: f64,
    pub normalization: f64,
    /// `u_{K,x,ε}` as a structured field.
    #[serde(skip)]
    pub field: StructuredBD,
    /// Cell-center samples `(y, u_{K,x,ε}(y))`.
    pub samples: Vec<(Vec<f64>, Vec<f64>)>,
    /// `|Eu_{K,x,ε}|(K)` in floating point.
    pub emass: f64,
    /// Exact value when the field admits it.
    pub emass_exact: Option<String>,
    pub exact_equals_volume: Option<bool>,
}

/// `u_{K,x,ε}(y) = (u(x + εy) − ℜ_{K(x,ε)}[u](x + εy)) / (ε λ)` with
/// `λ = |Eu|(K(x,ε)) / |K(x,ε)|`.
pub fn rescale(u: &StructuredBD, frame: &BlowupFrame, grid_per_axis: usize) -> Result<Rescaled> {
    if u.dim() != frame.k.dim() {
        return Err(Error::WrongDimension {
            expected: u.dim(),
            got: frame.k.dim(),
        });
    }
    let eps = frame.eps_f64();
    let lambda = frame.normalization(u)?;
    // The rigid projection commutes with rescaling, so it is taken on K.
    let scaled = u.rescaled(&frame.x, eps, 1.0 / (eps * lambda))?;
    let field = project_out_rigid(&scaled, &frame.k)?;
    let emass = field.total_variation(&frame.k)?;
    let (emass_exact, exact_equals_volume) = match exact_rescaled_mass(u, frame) {
        Ok(q) => {
            let vol: BigRational = frame
                .k
                .lo
                .iter()
                .zip(&frame.k.hi)
                .map(|(a, b)| Ok(rat(*b)? - rat(*a)?))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .product();
            if q != vol {
                return Err(Error::HypothesisViolated(format!("rescaled mass {q} differs from |K| = {vol}")));
            }
            (Some(q.to_string()), Some(true))
        }
        Err(Error::Unsupported(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let samples = sample_grid(&frame.k, grid_per_axis)
        .into_iter()
        .map(|y| {
            let v = field.eval(&y);
            (y, v)
        })
        .collect();
    Ok(Rescaled {
        eps,
        normalization: lambda,
        field,
        samples,
        emass,
        emass_exact,
        exact_equals_volume,
    })
}

fn sample_grid(k: &Aabb, m: usize) -> Vec<Vec<f64>> {
    let n = k.dim();
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let i = idx % m;
                    idx /= m;
                    k.lo[d] + (i as f64 + 0.5) * k.width(d) / m as f64
                })
                .collect()
        })
        .collect()
}

/// Largest gap between rescaling a pushed-forward field `B u(Bᵗ ·)` at
/// `B⁻ᵗ x` and pushing forward the rescaled field, on cell-center samples.
pub fn pushforward_rescale_gap(
    u: &StructuredBD,
    bc: &BaseChange,
    x: &[f64],
    eps: f64,
    k: &Aabb,
    grid_per_axis: usize,
) -> Result<f64> {
    let b = bc.matrix();
    let bt = b.transpose();
    let xt = bc.inverse_matrix().transpose().mul_vec(x);
    let push = |y: &[f64]| b.mul_vec(&u.eval(&bt.mul_vec(y)));
    let mut gap = 0.0f64;
    for y in sample_grid(k, grid_per_axis) {
        let p: Vec<f64> = xt.iter().zip(&y).map(|(a, b)| a + eps * b).collect();
        let lhs: Vec<f64> = push(&p).iter().map(|v| v / eps).collect();
        let q: Vec<f64> = x.iter().zip(bt.mul_vec(&y)).map(|(a, b)| a + eps * b).collect();
        let rhs: Vec<f64> = b.mul_vec(&u.eval(&q)).iter().map(|v| v / eps).collect();
        for (l, r) in lhs.iter().zip(&rhs) {
            gap = gap.max((l - r).abs());
        }
    }
    Ok(gap)
}

/// `ψ̄(y·η) ξ + β̄ (y·ξ) η + rigid` on the cube of side `ρ`, with
/// `ψ̄(t) = base + slope t + Σ mᵢ 1[t ≥ tᵢ]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfilePair {
    pub atoms: Vec<(f64, f64)>,
    pub slope: f64,
    pub base: f64,
    pub beta_bar: f64,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub rho: f64,
    pub rigid: Option<RigidMotion>,
}

impl ProfilePair {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Validation("ρ must be positive".into()));
        }
        let n = self.eta.len();
        if n < 2 || self.xi.len() != n {
            return Err(Error::Validation("profile directions of wrong length".into()));
        }
        if (vnorm(&self.eta) - 1.0).abs() > 1e-12 || (vnorm(&self.xi) - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("profile directions must be unit vectors".into()));
        }
        let h = 0.5 * self.rho;
        if self.atoms.iter().any(|(t, m)| !(*t > -h && *t < h) || !m.is_finite()) {
            return Err(Error::Validation("profile atoms must lie inside (−ρ/2, ρ/2)".into()));
        }
        if ![self.slope, self.base, self.beta_bar].iter().all(|x| x.is_finite()) {
            return Err(Error::Validation("non-finite profile parameter".into()));
        }
        if let Some(r) = &self.rigid {
            if r.l.dim() != n || r.v.len() != n {
                return Err(Error::WrongDimension { expected: n, got: r.v.len() });
            }
        }
        Ok(())
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.base + self.slope * t + self.atoms.iter().filter(|(ti, _)| t >= *ti).map(|(_, m)| m).sum::<f64>()
    }

    /// `Dψ̄((−ρ/2, ρ/2))`.
    pub fn variation(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum::<f64>() + self.slope * self.rho
    }

    /// Average of `ψ̄` over `(−ρ/2, ρ/2)`.
    pub fn mean(&self) -> f64 {
        let h = 0.5 * self.rho;
        self.base + self.atoms.iter().map(|(t, m)| m * (h - t)).sum::<f64>() / self.rho
    }

    /// `|Ev|(P)` for the cube `P` of side `ρ` in the `(η, η⊥)` frame.
    pub fn emass(&self) -> f64 {
        let n = self.eta.len();
        let line = self.atoms.iter().map(|(_, m)| m.abs()).sum::<f64>() + (self.slope + self.beta_bar).abs() * self.rho;
        odot(&self.eta, &self.xi).norm() * self.rho.powi(n as i32 - 1) * line
    }

    /// `|Ev|(P) = |P|` within round-off.
    pub fn satisfies_mass_hypothesis(&self) -> bool {
        let vol = self.rho.powi(self.eta.len() as i32);
        (self.emass() - vol).abs() <= 1e-12 * vol.max(1.0)
    }

    fn scale(&self) -> f64 {
        1.0 + self.base.abs()
            + self.atoms.iter().map(|(_, m)| m.abs()).sum::<f64>()
            + (self.slope.abs() + self.beta_bar.abs()) * self.rho
    }

    fn parallel(&self) -> Option<f64> {
        let d = vdot(&self.eta, &self.xi);
        ((d.abs() - 1.0).abs() <= 1e-12).then_some(d.signum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizedProfile {
    /// Normalized profile: zero average, `Dψ(I) = βρ`, `beta_bar = β`.
    pub psi: ProfilePair,
    pub beta: f64,
    pub kappa: f64,
    /// `v_in = v_out + correction`.
    pub correction: RigidMotion,
    pub mass_hypothesis: bool,
}

fn combine(a: &RigidMotion, b: Option<&RigidMotion>) -> RigidMotion {
    match b {
        None => a.clone(),
        Some(b) => RigidMotion {
            l: a.l + b.l,
            v: a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect(),
        },
    }
}

/// `κ = (ψ̄(ρ/2) − ψ̄(−ρ/2) − β̄ρ)/(2ρ)`, `ψ = ψ̄ − κt − mean ψ̄`, `β = β̄ + κ`.
///
/// The removed terms `κ((y·η)ξ − (y·ξ)η) + (mean ψ̄) ξ` form a rigid motion,
/// returned together with any rigid part of the input.
pub fn normalize_profile(p: &ProfilePair) -> Result<NormalizedProfile> {
    p.validate()?;
    if p.parallel().is_some() {
        return Err(Error::Unsupported("ξ = ±η needs the parallel normalization".into()));
    }
    let n = p.eta.len();
    let mass_hypothesis = p.satisfies_mass_hypothesis();
    let tol = 1e-12 * p.scale();
    let mean = p.mean();
    let defect = p.variation() - p.beta_bar * p.rho;
    if mean.abs() <= tol && defect.abs() <= tol && p.rigid.is_none() {
        return Ok(NormalizedProfile {
            psi: p.clone(),
            beta: p.beta_bar,
            kappa: 0.0,
            correction: RigidMotion { l: Mat::zeros(n), v: vec![0.0; n] },
            mass_hypothesis,
        });
    }
    let kappa = defect / (2.0 * p.rho);
    let beta = p.beta_bar + kappa;
    let psi = ProfilePair {
        atoms: p.atoms.clone(),
        slope: p.slope - kappa,
        base: p.base - mean,
        beta_bar: beta,
        eta: p.eta.clone(),
        xi: p.xi.clone(),
        rho: p.rho,
        rigid: None,
    };
    let l = (Mat::outer(&p.xi, &p.eta) - Mat::outer(&p.eta, &p.xi)) * kappa;
    let own = RigidMotion { l, v: p.xi.iter().map(|x| mean * x).collect() };
    Ok(NormalizedProfile {
        psi,
        beta,
        kappa,
        correction: combine(&own, p.rigid.as_ref()),
        mass_hypothesis,
    })
}

/// With `ξ = sη` the field is `φ(y·η) η`, `φ = s(ψ̄ + β̄t)`; `φ` must be
/// nondecreasing. Returns `φ` shifted to zero average as `psi` (with
/// `beta_bar = 0`, `xi = η`).
pub fn normalize_profile_parallel(p: &ProfilePair) -> Result<NormalizedProfile> {
    p.validate()?;
    let s = p
        .parallel()
        .ok_or_else(|| Error::Validation("directions are not parallel".into()))?;
    let n = p.eta.len();
    let tol = 1e-10 * p.scale();
    let atoms: Vec<(f64, f64)> = p.atoms.iter().map(|(t, m)| (*t, s * m)).collect();
    let slope = s * (p.slope + p.beta_bar);
    if atoms.iter().any(|(_, m)| *m < -tol) || slope < -tol {
        return Err(Error::HypothesisViolated("profile is not monotone".into()));
    }
    let phi = ProfilePair {
        atoms,
        slope,
        base: s * p.base,
        beta_bar: 0.0,
        eta: p.eta.clone(),
        xi: p.eta.clone(),
        rho: p.rho,
        rigid: None,
    };
    let mean = phi.mean();
    let psi = ProfilePair { base: phi.base - mean, ..phi };
    let own = RigidMotion { l: Mat::zeros(n), v: p.eta.iter().map(|e| mean * e).collect() };
    let mass_hypothesis = p.satisfies_mass_hypothesis();
    Ok(NormalizedProfile {
        psi,
        beta: 0.0,
        kappa: 0.0,
        correction: combine(&own, p.rigid.as_ref()),
        mass_hypothesis,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupStep {
    pub eps: f64,
    pub emass: f64,
    pub exact_equals_volume: Option<bool>,
    pub normalization: f64,
    /// Mean absolute misfit over the samples times `|K|`.
    pub residual: f64,
    pub flagged: bool,
    pub fit: ProfilePair,
    pub normalized: Option<NormalizedProfile>,
    pub beta: f64,
}

/// Residual above which a fit is flagged.
pub const FIT_THRESHOLD: f64 = 1e-8;

/// Rescales `u` at `x` along the schedule on the cube of side `ρ` and fits each
/// rescaled field to `ψ(y·η) ξ + β (y·ξ) η + rigid`. The breakpoints of `ψ` are
/// the planes normal to `η` that charge the rescaled E-measure.
pub fn blowup_sequence(
    u: &StructuredBD,
    x: &[f64],
    schedule: &[f64],
    rho: f64,
    grid_per_axis: usize,
) -> Result<Vec<BlowupStep>> {
    if u.dim() != 2 {
        return Err(Error::Unsupported("profile fitting is two-dimensional".into()));
    }
    if !(rho > 0.0) || grid_per_axis < 2 || schedule.is_empty() {
        return Err(Error::Validation("blow-up needs ρ > 0, a grid and a schedule".into()));
    }
    let (eta, xi) = match (u.profile(), u.jumps().first()) {
        (Some(p), _) => (p.eta.clone(), p.xi.clone()),
        (None, Some(j)) => {
            let d = vnorm(&j.delta);
            (j.normal.clone(), j.delta.iter().map(|x| x / d).collect())
        }
        (None, None) => return Err(Error::Unsupported("no profile or jump direction to fit".into())),
    };
    let k = Aabb::cube(&[0.0, 0.0], rho)?;
    schedule
        .par_iter()
        .map(|&eps| {
            let frame = BlowupFrame::new(x.to_vec(), k.clone(), eps)?;
            let r = rescale(u, &frame, grid_per_axis)?;
            fit_step(&r, &eta, &xi, rho)
        })
        .collect()
}

fn fit_step(r: &Rescaled, eta: &[f64], xi: &[f64], rho: f64) -> Result<BlowupStep> {
    let h = 0.5 * rho;
    let e = r.field.emeasure();
    let mut breaks: Vec<f64> = e
        .jump_atoms
        .iter()
        .map(|a| (&a.normal, a.offset))
        .chain(e.singular_atoms.iter().map(|a| (&a.normal, a.location)))
        .filter_map(|(nrm, off)| {
            let d = vdot(nrm, eta);
            ((d.abs() - 1.0).abs() <= 1e-12).then_some(off * d)
        })
        .filter(|t| *t > -h && *t < h)
        .collect();
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let m = breaks.len();
    // Columns: base, atoms, β, translation (2), rotation.
    let cols = m + 5;
    let rows = 2 * r.samples.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (s, (y, v)) in r.samples.iter().enumerate() {
        let t = vdot(y, eta);
        let yx = vdot(y, xi);
        for c in 0..2 {
            let row = 2 * s + c;
            a[(row, 0)] = xi[c];
            for (i, ti) in breaks.iter().enumerate() {
                if t >= *ti {
                    a[(row, 1 + i)] = xi[c];
                }
            }
            a[(row, m + 1)] = yx * eta[c];
            a[(row, m + 2 + c)] = 1.0;
            a[(row, m + 4)] = if c == 0 { -y[1] } else { y[0] };
            b[row] = v[c];
        }
    }
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Solver(format!("profile fit failed: {e}")))?;
    let fitted = &a * &coef;
    let misfit: f64 = (0..r.samples.len())
        .map(|s| ((fitted[2 * s] - b[2 * s]).powi(2) + (fitted[2 * s + 1] - b[2 * s + 1]).powi(2)).sqrt())
        .sum();
    let residual = misfit / r.samples.len() as f64 * rho * rho;
    let theta = coef[m + 4];
    let fit = ProfilePair {
        atoms: breaks.iter().enumerate().map(|(i, t)| (*t, coef[1 + i])).collect(),
        slope: 0.0,
        base: coef[0],
        beta_bar: coef[m + 1],
        eta: eta.to_vec(),
        xi: xi.to_vec(),
        rho,
        rigid: Some(RigidMotion {
            l: Mat::new2(0.0, -theta, theta, 0.0),
            v: vec![coef[m + 2], coef[m + 3]],
        }),
    };
    let normalized = if fit.parallel().is_some() {
        normalize_profile_parallel(&fit).ok()
    } else {
        normalize_profile(&fit).ok()
    };
    let beta = normalized.as_ref().map(|n| n.beta).unwrap_or(fit.beta_bar);
    Ok(BlowupStep {
        eps: r.eps,
        emass: r.emass,
        exact_equals_volume: r.exact_equals_volume,
        normalization: r.normalization,
        residual,
        flagged: residual > FIT_THRESHOLD,
        fit,
        normalized,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdmodel::CantorProfile;

    fn pair(atoms: Vec<(f64, f64)>, slope: f64, beta_bar: f64) -> ProfilePair {
        ProfilePair {
            atoms,
            slope,
            base: 0.0,
            beta_bar,
            eta: vec![1.0, 0.0],
            xi: vec![0.0, 1.0],
            rho: 1.0,
            rigid: None,
        }
    }

    #[test]
    fn linear_profile_by_hand() {
        let a = 3.0;
        let n = normalize_profile(&pair(vec![], a, 0.0)).unwrap();
        assert_eq!(n.kappa, a / 2.0);
        assert_eq!(n.beta, a / 2.0);
        assert_eq!(n.psi.slope, a / 2.0);
        assert_eq!(n.psi.base, 0.0);
    }

    #[test]
    fn normalized_input_is_a_fixed_point() {
        let n = normalize_profile(&pair(vec![(-0.2, 1.0), (0.3, 0.5)], 0.4, -0.1)).unwrap();
        let again = normalize_profile(&n.psi).unwrap();
        assert_eq!(again.psi, n.psi);
        assert_eq!(again.kappa, 0.0);
    }

    #[test]
    fn staircase_under_mass_hypothesis() {
        let s = std::f64::consts::SQRT_2;
        let n = normalize_profile(&pair(vec![(-0.25, s / 2.0), (0.25, s / 2.0)], 0.0, 0.0)).unwrap();
        assert!(n.mass_hypothesis);
        assert!((n.beta - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((n.psi.variation() - n.beta).abs() < 1e-15);
    }

    #[test]
    fn parallel_case() {
        let mut p = pair(vec![(0.0, 1.0)], 0.0, 0.0);
        p.xi = vec![-1.0, 0.0];
        p.atoms = vec![(0.0, -1.0)];
        assert!(normalize_profile(&p).is_err());
        let n = normalize_profile_parallel(&p).unwrap();
        assert_eq!(n.psi.atoms, vec![(0.0, 1.0)]);
        assert!(n.psi.mean().abs() < 1e-15);
        p.atoms = vec![(0.0, 1.0)];
        assert!(matches!(normalize_profile_parallel(&p), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn rescaled_staircase_mass_is_exact() {
        let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
        let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair).unwrap();
        for level in 1..=5 {
            let f = BlowupFrame::triadic(vec![0.0, 0.2], Aabb::unit_centered(2), level).unwrap();
            let r = rescale(&u, &f, 8).unwrap();
            assert_eq!(r.exact_equals_volume, Some(true));
            assert!((r.emass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_rescale() {
        let a = Mat::new2(2.0, 1.0, 1.0, -1.0);
        let u = StructuredBD::affine(a, vec![1.0, 2.0]).unwrap();
        let f = BlowupFrame::new(vec![0.3, 0.1], Aabb::unit_centered(2), 0.25).unwrap();
        let r = rescale(&u, &f, 4).unwrap();
        assert_eq!(r.exact_equals_volume, Some(true));
        for (y, v) in &r.samples {
            let ay = a.mul_vec(y);
            assert!((v[0] - ay[0] / a.norm()).abs() < 1e-12 && (v[1] - ay[1] / a.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_window_is_rejected() {
        let u = StructuredBD::affine(Mat::new2(0.0, 1.0, -1.0, 0.0), vec![0.0, 0.0]).unwrap();
        let f = BlowupFrame::new(vec![0.0, 0.0], Aabb::unit_centered(2), 0.5).unwrap();
        assert!(matches!(rescale(&u, &f, 4), Err(Error::RigidWindow(_))));
    }
}
