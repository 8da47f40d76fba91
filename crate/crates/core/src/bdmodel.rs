//! Synthetic bounded-deformation fields with an exactly queryable
//! decomposition of the symmetrized derivative.
//!
//! A [`StructuredBD`] is a sum of
//! - smooth closed-form terms (affine, quadratic, sinusoidal),
//! - finitely many jump planes `δv · 1[x·ν ≥ c]`,
//! - an optional profile `ψ(x·η) ξ + β (x·ξ) η` where `ψ` is a finite
//!   staircase.
//!
//! The staircase part is carried at finite depth, so its derivative is atomic;
//! its atoms are reported separately from the jump planes and tagged as the
//! singular profile part.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, FACE_TOL};
use crate::quadrature::integrate_box;
use crate::tensor::{odot, vdot, vnorm, Mat};

const UNIT_TOL: f64 = 1e-12;

/// Closed-form smooth vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmoothTerm {
    /// `A x + v`.
    Affine { a: Mat, v: Vec<f64> },
    /// `u_i(x) = ½ xᵗ H_i x` with symmetric `H_i`.
    #[serde(alias = "polynomial")]
    Quadratic { h: Vec<Mat> },
    /// `amp · sin(k·x + phase)`.
    Sinusoid { amp: Vec<f64>, k: Vec<f64>, phase: f64 },
}

impl SmoothTerm {
    fn validate(&self, n: usize) -> Result<()> {
        let ok = match self {
            SmoothTerm::Affine { a, v } => a.dim() == n && v.len() == n,
            SmoothTerm::Quadratic { h } => {
                h.len() == n && h.iter().all(|m| m.dim() == n && m.is_symmetric(1e-14))
            }
            SmoothTerm::Sinusoid { amp, k, phase } => {
                amp.len() == n && k.len() == n && phase.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("malformed smooth term {self:?}")))
        }
    }

    fn is_affine(&self) -> bool {
        matches!(self, SmoothTerm::Affine { .. })
    }

    fn add_eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SmoothTerm::Affine { a, v } => {
                for (o, (ax, vi)) in out.iter_mut().zip(a.mul_vec(x).iter().zip(v)) {
                    *o += ax + vi;
                }
            }
            SmoothTerm::Quadratic { h } => {
                for (o, hi) in out.iter_mut().zip(h) {
                    *o += 0.5 * vdot(x, &hi.mul_vec(x));
                }
            }
            SmoothTerm::Sinusoid { amp, k, phase } => {
                let s = (vdot(k, x) + phase).sin();
                for (o, a) in out.iter_mut().zip(amp) {
                    *o += a * s;
                }
            }
        }
    }

    fn add_grad(&self, x: &[f64], g: &mut Mat) {
        match self {
            SmoothTerm::Affine { a, .. } => *g += *a,
            SmoothTerm::Quadratic { h } => {
                for (i, hi) in h.iter().enumerate() {
                    let r = hi.mul_vec(x);
                    for (j, rj) in r.iter().enumerate() {
                        g[(i, j)] += rj;
                    }
                }
            }
            SmoothTerm::Sinusoid { amp, k, phase } => {
                *g += Mat::outer(amp, k) * (vdot(k, x) + phase).cos();
            }
        }
    }

    /// Mean over the box.
    fn mean(&self, b: &Aabb) -> Vec<f64> {
        let c = b.center();
        match self {
            SmoothTerm::Affine { a, v } => a.mul_vec(&c).iter().zip(v).map(|(x, y)| x + y).collect(),
            SmoothTerm::Quadratic { h } => h
                .iter()
                .map(|hi| {
                    let var: f64 = (0..b.dim())
                        .map(|d| hi[(d, d)] * b.width(d).powi(2) / 12.0)
                        .sum();
                    0.5 * (vdot(&c, &hi.mul_vec(&c)) + var)
                })
                .collect(),
            SmoothTerm::Sinusoid { amp, k, phase } => {
                let (_, im) = mean_exp(k, *phase, b);
                amp.iter().map(|a| a * im).collect()
            }
        }
    }

    /// `∫_box ∇u`.
    fn grad_integral(&self, b: &Aabb) -> Mat {
        let c = b.center();
        let vol = b.volume();
        let n = b.dim();
        match self {
            SmoothTerm::Affine { a, .. } => *a * vol,
            SmoothTerm::Quadratic { .. } => {
                let mut g = Mat::zeros(n);
                self.add_grad(&c, &mut g);
                g * vol
            }
            SmoothTerm::Sinusoid { amp, k, phase } => {
                let (re, _) = mean_exp(k, *phase, b);
                Mat::outer(amp, k) * (re * vol)
            }
        }
    }

    /// `y ↦ term(x0 + ε y)` as a sum of terms.
    fn compose(&self, x0: &[f64], eps: f64) -> Vec<SmoothTerm> {
        match self {
            SmoothTerm::Affine { a, v } => {
                let shift = a.mul_vec(x0);
                vec![SmoothTerm::Affine {
                    a: *a * eps,
                    v: shift.iter().zip(v).map(|(s, v)| s + v).collect(),
                }]
            }
            SmoothTerm::Quadratic { h } => {
                let n = h.len();
                let lin = Mat::from_fn(n, |i, j| eps * h[i].mul_vec(x0)[j]);
                let v = h.iter().map(|hi| 0.5 * vdot(x0, &hi.mul_vec(x0))).collect();
                vec![
                    SmoothTerm::Quadratic {
                        h: h.iter().map(|m| *m * (eps * eps)).collect(),
                    },
                    SmoothTerm::Affine { a: lin, v },
                ]
            }
            SmoothTerm::Sinusoid { amp, k, phase } => vec![SmoothTerm::Sinusoid {
                amp: amp.clone(),
                k: k.iter().map(|x| x * eps).collect(),
                phase: phase + vdot(k, x0),
            }],
        }
    }

    fn scaled(&self, s: f64) -> SmoothTerm {
        match self {
            SmoothTerm::Affine { a, v } => SmoothTerm::Affine {
                a: *a * s,
                v: v.iter().map(|x| x * s).collect(),
            },
            SmoothTerm::Quadratic { h } => SmoothTerm::Quadratic {
                h: h.iter().map(|m| *m * s).collect(),
            },
            SmoothTerm::Sinusoid { amp, k, phase } => SmoothTerm::Sinusoid {
                amp: amp.iter().map(|x| x * s).collect(),
                k: k.clone(),
                phase: *phase,
            },
        }
    }
}

/// Mean of `exp(i (k·x + φ))` over the box, as `(re, im)`.
fn mean_exp(k: &[f64], phase: f64, b: &Aabb) -> (f64, f64) {
    let (mut re, mut im) = (phase.cos(), phase.sin());
    for d in 0..b.dim() {
        let (lo, hi, kd) = (b.lo[d], b.hi[d], k[d]);
        let (mr, mi) = if kd.abs() * (hi - lo) < 1e-8 {
            // Second-order expansion around the midpoint.
            let c = 0.5 * (lo + hi);
            let damp = 1.0 - (kd * (hi - lo)).powi(2) / 24.0;
            ((kd * c).cos() * damp, (kd * c).sin() * damp)
        } else {
            let w = kd * (hi - lo);
            (
                ((kd * hi).sin() - (kd * lo).sin()) / w,
                ((kd * lo).cos() - (kd * hi).cos()) / w,
            )
        };
        let (r, i) = (re * mr - im * mi, re * mi + im * mr);
        re = r;
        im = i;
    }
    (re, im)
}

/// Jump plane `δv · 1[x·ν ≥ c]`; with `closed = false` the plane itself takes
/// the value of the negative side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub delta: Vec<f64>,
    #[serde(default = "default_true")]
    pub closed: bool,
}

fn default_true() -> bool {
    true
}

impl Jump {
    #[inline]
    fn indicator(&self, x: &[f64]) -> f64 {
        let s = vdot(x, &self.normal) - self.offset;
        if s > 0.0 || (s == 0.0 && self.closed) {
            1.0
        } else {
            0.0
        }
    }
}

/// First nonzero component positive.
pub fn is_canonical(normal: &[f64]) -> bool {
    normal
        .iter()
        .find(|c| **c != 0.0)
        .map(|c| *c > 0.0)
        .unwrap_or(false)
}

/// Triadic staircase: the depth-`d` Cantor construction on `support` with an
/// atom of mass `total_mass / 2ᵈ` at the center of every surviving interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorProfile {
    pub depth: u32,
    pub total_mass: f64,
    pub support: (f64, f64),
}

impl CantorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.depth > 20 {
            return Err(Error::Validation("staircase depth must lie in 1..=20".into()));
        }
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return Err(Error::Validation("staircase mass must be positive".into()));
        }
        if !(self.support.1 > self.support.0) {
            return Err(Error::Validation("empty staircase support".into()));
        }
        Ok(())
    }

    /// Atom `(location, mass)` list, sorted by location.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let d = self.depth;
        let count = 1u64 << d;
        let pow3 = 3u64.pow(d);
        let (a, b) = self.support;
        let m = self.total_mass / count as f64;
        (0..count)
            .map(|j| {
                // Left end of the j-th interval is (Σ 2 b_k 3^(d-k)) / 3^d.
                let mut left = 0u64;
                for k in 0..d {
                    if (j >> (d - 1 - k)) & 1 == 1 {
                        left += 2 * 3u64.pow(d - 1 - k);
                    }
                }
                let center = (2 * left + 1) as f64 / (2 * pow3) as f64;
                (a + (b - a) * center, m)
            })
            .collect()
    }
}

/// `ψ(x·η) ξ + β (x·ξ) η` with `ψ(t) = base + Σ m_i 1[t ≥ t_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
    pub base: f64,
    pub beta: f64,
}

impl Profile {
    /// Staircase profile shifted to zero average over its support.
    pub fn staircase(eta: Vec<f64>, xi: Vec<f64>, stair: &CantorProfile, beta: f64) -> Result<Self> {
        stair.validate()?;
        let atoms = stair.atoms();
        let (a, b) = stair.support;
        let base = -atoms.iter().map(|(t, m)| m * (b - t) / (b - a)).sum::<f64>();
        Ok(Profile {
            eta,
            xi,
            atoms,
            base,
            beta,
        })
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.base
            + self
                .atoms
                .iter()
                .filter(|(ti, _)| t >= *ti)
                .map(|(_, m)| m)
                .sum::<f64>()
    }

    /// `|η ⊙ ξ|`.
    pub fn polar_norm(&self) -> f64 {
        odot(&self.eta, &self.xi).norm()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.eta.len() != n || self.xi.len() != n {
            return Err(Error::Validation("profile directions of wrong length".into()));
        }
        if (vnorm(&self.eta) - 1.0).abs() > UNIT_TOL || (vnorm(&self.xi) - 1.0).abs() > UNIT_TOL {
            return Err(Error::Validation("profile directions must be unit vectors".into()));
        }
        if !self.base.is_finite() || !self.beta.is_finite() {
            return Err(Error::Validation("non-finite profile parameter".into()));
        }
        for w in self.atoms.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::Validation("profile atoms must be sorted".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum SmoothSpec {
    Named(String),
    One(SmoothTerm),
    Many(Vec<SmoothTerm>),
}

#[derive(Clone, Debug, Deserialize)]
struct ProfileSpec {
    eta: Vec<f64>,
    xi: Vec<f64>,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    staircase: Option<CantorProfile>,
    #[serde(default)]
    atoms: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    base: f64,
}

#[derive(Clone, Debug, Deserialize)]
struct RawBd {
    dim: usize,
    #[serde(default)]
    smooth: Option<SmoothSpec>,
    #[serde(default)]
    jumps: Vec<Jump>,
    #[serde(default)]
    profile: Option<ProfileSpec>,
}

impl TryFrom<RawBd> for StructuredBD {
    type Error = Error;

    fn try_from(raw: RawBd) -> Result<Self> {
        let smooth = match raw.smooth {
            None => vec![],
            Some(SmoothSpec::Named(s)) if s == "zero" => vec![],
            Some(SmoothSpec::Named(s)) => {
                return Err(Error::Validation(format!("unknown smooth tag {s:?}")))
            }
            Some(SmoothSpec::One(t)) => vec![t],
            Some(SmoothSpec::Many(v)) => v,
        };
        let profile = match raw.profile {
            None => None,
            Some(p) => Some(match (p.staircase, p.atoms) {
                (Some(st), None) => Profile::staircase(p.eta, p.xi, &st, p.beta)?,
                (None, Some(mut atoms)) => {
                    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Profile {
                        eta: p.eta,
                        xi: p.xi,
                        atoms,
                        base: p.base,
                        beta: p.beta,
                    }
                }
                (None, None) => Profile {
                    eta: p.eta,
                    xi: p.xi,
                    atoms: vec![],
                    base: p.base,
                    beta: p.beta,
                },
                (Some(_), Some(_)) => {
                    return Err(Error::Validation(
                        "profile takes either a staircase or an atom list".into(),
                    ))
                }
            }),
        };
        StructuredBD::new(raw.dim, smooth, raw.jumps, profile)
    }
}

/// Synthetic BD field; immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBd")]
pub struct StructuredBD {
    dim: usize,
    smooth: Vec<SmoothTerm>,
    jumps: Vec<Jump>,
    profile: Option<Profile>,
}

impl StructuredBD {
    /// Validates the parts and puts every jump normal in canonical orientation.
    pub fn new(
        dim: usize,
        mut smooth: Vec<SmoothTerm>,
        jumps: Vec<Jump>,
        profile: Option<Profile>,
    ) -> Result<Self> {
        if !(2..=crate::tensor::MAX_DIM).contains(&dim) {
            return Err(Error::Validation(format!("dimension {dim} outside 2..=4")));
        }
        for t in &smooth {
            t.validate(dim)?;
        }
        let mut canon = Vec::with_capacity(jumps.len());
        for j in jumps {
            if j.normal.len() != dim || j.delta.len() != dim {
                return Err(Error::Validation("jump vectors of wrong length".into()));
            }
            if (vnorm(&j.normal) - 1.0).abs() > UNIT_TOL {
                return Err(Error::Validation("jump normal must be a unit vector".into()));
            }
            if !j.offset.is_finite() || j.delta.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("non-finite jump data".into()));
            }
            if is_canonical(&j.normal) {
                canon.push(j);
            } else {
                // δv 1[x·ν ≥ c] = δv − δv 1[x·(−ν) > −c].
                smooth.push(SmoothTerm::Affine {
                    a: Mat::zeros(dim),
                    v: j.delta.clone(),
                });
                canon.push(Jump {
                    normal: j.normal.iter().map(|x| -x).collect(),
                    offset: -j.offset,
                    delta: j.delta.iter().map(|x| -x).collect(),
                    closed: !j.closed,
                });
            }
        }
        for (i, a) in canon.iter().enumerate() {
            for b in &canon[i + 1..] {
                let same = a
                    .normal
                    .iter()
                    .zip(&b.normal)
                    .all(|(x, y)| (x - y).abs() <= UNIT_TOL)
                    && (a.offset - b.offset).abs() <= UNIT_TOL;
                if same {
                    return Err(Error::Validation("jump planes must be pairwise distinct".into()));
                }
            }
        }
        if let Some(p) = &profile {
            p.validate(dim)?;
        }
        Ok(StructuredBD {
            dim,
            smooth,
            jumps: canon,
            profile,
        })
    }

    pub fn zero(dim: usize) -> Self {
        StructuredBD {
            dim,
            smooth: vec![],
            jumps: vec![],
            profile: None,
        }
    }

    pub fn affine(a: Mat, v: Vec<f64>) -> Result<Self> {
        StructuredBD::new(a.dim(), vec![SmoothTerm::Affine { a, v }], vec![], None)
    }

    /// `u_{v⁻,v⁺,ν}(x − x0)`: `v⁺` where `(x − x0)·ν ≥ 0`, `v⁻` elsewhere.
    pub fn two_state(vminus: &[f64], vplus: &[f64], nu: &[f64], x0: &[f64]) -> Result<Self> {
        let n = vminus.len();
        StructuredBD::new(
            n,
            vec![SmoothTerm::Affine {
                a: Mat::zeros(n),
                v: vminus.to_vec(),
            }],
            vec![Jump {
                normal: nu.to_vec(),
                offset: vdot(nu, x0),
                delta: vplus.iter().zip(vminus).map(|(p, m)| p - m).collect(),
                closed: true,
            }],
            None,
        )
    }

    /// `ψ(x·η) ξ` with the staircase `ψ`.
    pub fn staircase(eta: Vec<f64>, xi: Vec<f64>, stair: &CantorProfile) -> Result<Self> {
        let n = eta.len();
        let p = Profile::staircase(eta, xi, stair, 0.0)?;
        StructuredBD::new(n, vec![], vec![], Some(p))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Validation(format!("bad BD spec: {e}")))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smooth(&self) -> &[SmoothTerm] {
        &self.smooth
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    /// True when the smooth part is a sum of affine maps.
    pub fn smooth_is_affine(&self) -> bool {
        self.smooth.iter().all(SmoothTerm::is_affine)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in &self.smooth {
            t.add_eval(x, &mut out);
        }
        for j in &self.jumps {
            let h = j.indicator(x);
            if h != 0.0 {
                for (o, d) in out.iter_mut().zip(&j.delta) {
                    *o += d;
                }
            }
        }
        if let Some(p) = &self.profile {
            let psi = p.psi(vdot(x, &p.eta));
            let lin = p.beta * vdot(x, &p.xi);
            for i in 0..self.dim {
                out[i] += psi * p.xi[i] + lin * p.eta[i];
            }
        }
        out
    }

    /// Absolutely continuous part of the full gradient.
    pub fn grad_ac(&self, x: &[f64]) -> Mat {
        let mut g = Mat::zeros(self.dim);
        for t in &self.smooth {
            t.add_grad(x, &mut g);
        }
        if let Some(p) = &self.profile {
            g += Mat::outer(&p.eta, &p.xi) * p.beta;
        }
        g
    }

    /// `e(u)(x)`, the density of the absolutely continuous part of `Eu`.
    pub fn strain_ac(&self, x: &[f64]) -> Mat {
        self.grad_ac(x).sym()
    }

    fn strain_is_constant(&self) -> bool {
        self.smooth_is_affine()
    }

    /// `∫_box u` divided by the box volume, exact for every part.
    pub fn mean(&self, b: &Aabb) -> Result<Vec<f64>> {
        self.check_box(b)?;
        let mut out = vec![0.0; self.dim];
        for t in &self.smooth {
            for (o, m) in out.iter_mut().zip(t.mean(b)) {
                *o += m;
            }
        }
        for j in &self.jumps {
            let f = b.halfspace_fraction(&j.normal, j.offset)?;
            for (o, d) in out.iter_mut().zip(&j.delta) {
                *o += f * d;
            }
        }
        if let Some(p) = &self.profile {
            let mut psi_mean = p.base;
            for (t, m) in &p.atoms {
                psi_mean += m * b.halfspace_fraction(&p.eta, *t)?;
            }
            let xi_c = vdot(&b.center(), &p.xi) * p.beta;
            for i in 0..self.dim {
                out[i] += psi_mean * p.xi[i] + xi_c * p.eta[i];
            }
        }
        Ok(out)
    }

    /// `Du(box)` for the open box; planes lying on a face do not charge it.
    pub fn du_value(&self, b: &Aabb) -> Result<Mat> {
        self.check_box(b)?;
        let mut d = Mat::zeros(self.dim);
        for t in &self.smooth {
            d += t.grad_integral(b);
        }
        for j in &self.jumps {
            d += Mat::outer(&j.delta, &j.normal) * open_section(b, &j.normal, j.offset)?;
        }
        if let Some(p) = &self.profile {
            d += Mat::outer(&p.eta, &p.xi) * (p.beta * b.volume());
            for (t, m) in &p.atoms {
                d += Mat::outer(&p.xi, &p.eta) * (m * open_section(b, &p.eta, *t)?);
            }
        }
        Ok(d)
    }

    pub fn emeasure(&self) -> EMeasure {
        let jump_atoms = self
            .jumps
            .iter()
            .filter_map(|j| {
                let e = odot(&j.delta, &j.normal);
                let dens = e.norm();
                (dens > 0.0).then(|| JumpAtom {
                    normal: j.normal.clone(),
                    offset: j.offset,
                    polar: e * (1.0 / dens),
                    density: dens,
                })
            })
            .collect();
        let singular_atoms = match &self.profile {
            None => vec![],
            Some(p) => {
                let e = odot(&p.eta, &p.xi);
                let pn = e.norm();
                p.atoms
                    .iter()
                    .filter(|(_, m)| *m != 0.0)
                    .map(|(t, m)| {
                        // A negative step flips the polar.
                        let s = m.signum();
                        SingularAtom {
                            normal: p.eta.clone(),
                            location: *t,
                            mass: m.abs() * pn,
                            polar: e * (s / pn),
                        }
                    })
                    .collect()
            }
        };
        EMeasure {
            dim: self.dim,
            ac: AcDensity {
                smooth: self.smooth.clone(),
                slope: self
                    .profile
                    .as_ref()
                    .map(|p| odot(&p.eta, &p.xi) * p.beta)
                    .unwrap_or_else(|| Mat::zeros(self.dim)),
                constant: self.strain_is_constant(),
            },
            jump_atoms,
            singular_atoms,
        }
    }

    /// `|Eu|(box)`.
    pub fn total_variation(&self, b: &Aabb) -> Result<f64> {
        self.emeasure().total_variation(b)
    }

    /// One-sided traces `(u⁻, u⁺, ν)` of jump plane `index` at the point of the
    /// plane closest to `x`.
    pub fn trace_pair_at(&self, index: usize, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let j = self
            .jumps
            .get(index)
            .ok_or_else(|| Error::Validation(format!("no jump plane {index}")))?;
        let s = j.offset - vdot(x, &j.normal);
        let xp: Vec<f64> = x.iter().zip(&j.normal).map(|(a, n)| a + s * n).collect();
        let mut minus = self.eval(&xp);
        if j.indicator(&xp) != 0.0 {
            for (m, d) in minus.iter_mut().zip(&j.delta) {
                *m -= d;
            }
        }
        let plus = minus.iter().zip(&j.delta).map(|(m, d)| m + d).collect();
        Ok((minus, plus, j.normal.clone()))
    }

    /// Traces at the plane point nearest the origin.
    pub fn trace_pair(&self, index: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.trace_pair_at(index, &vec![0.0; self.dim])
    }

    /// Traces reported with respect to the query orientation `nu`.
    pub fn trace_pair_oriented(
        &self,
        index: usize,
        x: &[f64],
        nu: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (m, p, n) = self.trace_pair_at(index, x)?;
        if vdot(nu, &n) < 0.0 {
            Ok((p, m, n.iter().map(|x| -x).collect()))
        } else {
            Ok((m, p, n))
        }
    }

    /// `u + A x + v`.
    pub fn plus_affine(&self, a: Mat, v: Vec<f64>) -> StructuredBD {
        let mut out = self.clone();
        out.smooth.push(SmoothTerm::Affine { a, v });
        out
    }

    /// Pointwise sum. Jump planes present in both summands are merged.
    pub fn sum(&self, other: &StructuredBD) -> Result<StructuredBD> {
        if self.dim != other.dim {
            return Err(Error::WrongDimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut smooth = self.smooth.clone();
        smooth.extend(other.smooth.iter().cloned());
        let mut jumps = self.jumps.clone();
        for j in &other.jumps {
            match jumps.iter_mut().find(|k| {
                k.normal == j.normal && k.offset == j.offset && k.closed == j.closed
            }) {
                Some(k) => {
                    for (a, b) in k.delta.iter_mut().zip(&j.delta) {
                        *a += b;
                    }
                }
                None => jumps.push(j.clone()),
            }
        }
        let profile = match (&self.profile, &other.profile) {
            (None, None) => None,
            (Some(p), None) | (None, Some(p)) => Some(p.clone()),
            (Some(_), Some(_)) => {
                return Err(Error::Unsupported("sum of two profiles".into()));
            }
        };
        StructuredBD::new(self.dim, smooth, jumps, profile)
    }

    /// `y ↦ λ u(x0 + ε y)`.
    pub fn rescaled(&self, x0: &[f64], eps: f64, lambda: f64) -> Result<StructuredBD> {
        if !(eps > 0.0) || !lambda.is_finite() {
            return Err(Error::Validation("rescaling needs eps > 0".into()));
        }
        let mut smooth: Vec<SmoothTerm> = self
            .smooth
            .iter()
            .flat_map(|t| t.compose(x0, eps))
            .map(|t| t.scaled(lambda))
            .collect();
        let jumps = self
            .jumps
            .iter()
            .map(|j| Jump {
                normal: j.normal.clone(),
                offset: (j.offset - vdot(x0, &j.normal)) / eps,
                delta: j.delta.iter().map(|d| d * lambda).collect(),
                closed: j.closed,
            })
            .collect();
        let profile = self.profile.as_ref().map(|p| {
            let shift = vdot(x0, &p.eta);
            let lin0 = p.beta * vdot(x0, &p.xi);
            smooth.push(SmoothTerm::Affine {
                a: Mat::zeros(self.dim),
                v: p.eta.iter().map(|e| lambda * lin0 * e).collect(),
            });
            Profile {
                eta: p.eta.clone(),
                xi: p.xi.clone(),
                atoms: p
                    .atoms
                    .iter()
                    .map(|(t, m)| ((t - shift) / eps, m * lambda))
                    .collect(),
                base: p.base * lambda,
                beta: p.beta * eps * lambda,
            }
        });
        StructuredBD::new(self.dim, smooth, jumps, profile)
    }

    /// Locations of axis-aligned discontinuities per axis, for piecewise
    /// quadrature.
    pub fn axis_breaks(&self) -> Vec<Vec<f64>> {
        let mut br = vec![Vec::new(); self.dim];
        for j in &self.jumps {
            if let Some((k, s)) = Aabb::axis_of(&j.normal) {
                br[k].push(j.offset * s);
            }
        }
        if let Some(p) = &self.profile {
            if let Some((k, s)) = Aabb::axis_of(&p.eta) {
                for (t, _) in &p.atoms {
                    br[k].push(t * s);
                }
            }
        }
        br
    }

    /// True when every discontinuity is axis-aligned.
    pub fn discontinuities_axis_aligned(&self) -> bool {
        self.jumps.iter().all(|j| Aabb::axis_of(&j.normal).is_some())
            && self
                .profile
                .as_ref()
                .map(|p| p.atoms.is_empty() || Aabb::axis_of(&p.eta).is_some())
                .unwrap_or(true)
    }

    /// Every discontinuity plane as `(normal, offset)`.
    pub fn discontinuity_planes(&self) -> Vec<(Vec<f64>, f64)> {
        let mut v: Vec<(Vec<f64>, f64)> = self
            .jumps
            .iter()
            .map(|j| (j.normal.clone(), j.offset))
            .collect();
        if let Some(p) = &self.profile {
            v.extend(p.atoms.iter().map(|(t, _)| (p.eta.clone(), *t)));
        }
        v
    }

    fn check_box(&self, b: &Aabb) -> Result<()> {
        if b.dim() != self.dim {
            return Err(Error::WrongDimension {
                expected: self.dim,
                got: b.dim(),
            });
        }
        Ok(())
    }
}

fn open_section(b: &Aabb, normal: &[f64], offset: f64) -> Result<f64> {
    match b.plane_section(normal, offset) {
        Err(Error::BoundaryChargedBox(_)) => Ok(0.0),
        r => r,
    }
}

/// Density of the absolutely continuous part of `Eu`.
#[derive(Clone, Debug)]
pub struct AcDensity {
    smooth: Vec<SmoothTerm>,
    slope: Mat,
    constant: bool,
}

impl AcDensity {
    pub fn at(&self, x: &[f64]) -> Mat {
        let mut g = Mat::zeros(self.slope.dim());
        for t in &self.smooth {
            t.add_grad(x, &mut g);
        }
        g.sym() + self.slope
    }

    /// `∫_box |e(u)|`; exact for constant strain, high-order quadrature otherwise.
    pub fn mass(&self, b: &Aabb) -> f64 {
        if self.constant {
            return self.at(&b.center()).norm() * b.volume();
        }
        let n = b.dim();
        let pieces = if n <= 2 { 16 } else if n == 3 { 6 } else { 3 };
        integrate_box(&b.lo, &b.hi, &vec![vec![]; n], pieces, 8, &mut |x| {
            self.at(x).norm()
        })
    }

    pub fn integral(&self, b: &Aabb) -> Mat {
        let mut g = Mat::zeros(self.slope.dim());
        for t in &self.smooth {
            g += t.grad_integral(b);
        }
        g.sym() + self.slope * b.volume()
    }
}

/// Jump part: `polar · density · Hⁿ⁻¹⌊{x·ν = c}`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpAtom {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub polar: Mat,
    pub density: f64,
}

/// Singular profile part: `polar · mass · Hⁿ⁻¹⌊{x·η = location}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularAtom {
    pub normal: Vec<f64>,
    pub location: f64,
    pub mass: f64,
    pub polar: Mat,
}

/// Decomposition `Eu = e(u) Lⁿ + jump part + singular profile part`.
#[derive(Clone, Debug)]
pub struct EMeasure {
    pub dim: usize,
    pub ac: AcDensity,
    pub jump_atoms: Vec<JumpAtom>,
    pub singular_atoms: Vec<SingularAtom>,
}

impl EMeasure {
    pub fn ac_density(&self, x: &[f64]) -> Mat {
        self.ac.at(x)
    }

    /// Plane-concentrated parts grouped by plane; coincident planes add as
    /// matrices before the norm is taken.
    fn plane_groups(&self) -> Vec<(Vec<f64>, f64, Mat)> {
        let mut groups: Vec<(Vec<f64>, f64, Mat)> = Vec::new();
        let items = self
            .jump_atoms
            .iter()
            .map(|a| (&a.normal, a.offset, a.polar * a.density))
            .chain(
                self.singular_atoms
                    .iter()
                    .map(|a| (&a.normal, a.location, a.polar * a.mass)),
            );
        for (normal, offset, dens) in items {
            let (nc, oc) = if is_canonical(normal) {
                (normal.clone(), offset)
            } else {
                (normal.iter().map(|x| -x).collect(), -offset)
            };
            let scale = 1.0 + oc.abs();
            match groups.iter_mut().find(|(n, o, _)| {
                n.iter().zip(&nc).all(|(a, b)| (a - b).abs() <= UNIT_TOL)
                    && (o - oc).abs() <= FACE_TOL * scale
            }) {
                Some(g) => g.2 += dens,
                None => groups.push((nc, oc, dens)),
            }
        }
        groups
    }

    /// `|Eu|(box)`; fails if a charged plane contains a face of the box.
    pub fn total_variation(&self, b: &Aabb) -> Result<f64> {
        if b.dim() != self.dim {
            return Err(Error::WrongDimension {
                expected: self.dim,
                got: b.dim(),
            });
        }
        let mut tv = self.ac.mass(b);
        for (n, o, dens) in self.plane_groups() {
            let area = b.plane_section(&n, o)?;
            tv += dens.norm() * area;
        }
        Ok(tv)
    }

    /// `Eu(box)` as a symmetric matrix.
    pub fn value(&self, b: &Aabb) -> Result<Mat> {
        let mut v = self.ac.integral(b);
        for (n, o, dens) in self.plane_groups() {
            v += dens * b.plane_section(&n, o)?;
        }
        Ok(v)
    }

    /// Total singular profile mass inside the box.
    pub fn singular_mass(&self, b: &Aabb) -> Result<f64> {
        let mut s = 0.0;
        for a in &self.singular_atoms {
            s += a.mass * b.plane_section(&a.normal, a.location)?;
        }
        Ok(s)
    }

    pub fn jump_mass(&self, b: &Aabb) -> Result<f64> {
        let mut s = 0.0;
        for a in &self.jump_atoms {
            s += a.density * b.plane_section(&a.normal, a.offset)?;
        }
        Ok(s)
    }
}

/// `sin(2π k·x)` helper used by examples and tests.
pub fn sinusoid(amp: Vec<f64>, wave: Vec<f64>, phase: f64) -> SmoothTerm {
    SmoothTerm::Sinusoid {
        amp,
        k: wave.iter().map(|w| 2.0 * PI * w).collect(),
        phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::unit;
    use approx::assert_abs_diff_eq;

    fn e(k: usize) -> Vec<f64> {
        unit(2, k)
    }

    fn unit_box() -> Aabb {
        Aabb::unit_centered(2)
    }

    #[test]
    fn affine_has_only_ac_part() {
        let a = Mat::new2(1.0, 2.0, 0.0, -1.0);
        let u = StructuredBD::affine(a, vec![0.3, 0.1]).unwrap();
        let em = u.emeasure();
        assert_eq!(em.ac_density(&[0.2, 0.1]), a.sym());
        assert!(em.jump_atoms.is_empty() && em.singular_atoms.is_empty());
        assert_abs_diff_eq!(u.total_variation(&unit_box()).unwrap(), a.sym().norm(), epsilon = 1e-15);
    }

    #[test]
    fn two_state_field_has_one_jump_atom() {
        let vm = [0.5, -1.0];
        let vp = [1.5, 2.0];
        let nu = [0.6, 0.8];
        let u = StructuredBD::two_state(&vm, &vp, &nu, &[0.0, 0.0]).unwrap();
        let em = u.emeasure();
        assert_eq!(em.jump_atoms.len(), 1);
        let dv = [1.0, 3.0];
        let expected = odot(&dv, &nu);
        let a = &em.jump_atoms[0];
        assert!((a.polar * a.density - expected).max_abs() < 1e-15);
        assert_abs_diff_eq!(a.density, expected.norm(), epsilon = 1e-15);
    }

    #[test]
    fn pure_jump_total_variation() {
        let u = StructuredBD::two_state(&[0.0, 0.0], &e(1), &e(0), &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            u.total_variation(&unit_box()).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-15
        );
        // Face on the jump plane.
        let b = Aabb::new(vec![0.0, -0.5], vec![1.0, 0.5]).unwrap();
        assert!(matches!(u.total_variation(&b), Err(Error::BoundaryChargedBox(_))));
    }

    #[test]
    fn staircase_singular_mass() {
        for depth in [1, 3, 6] {
            let st = CantorProfile {
                depth,
                total_mass: 1.0,
                support: (0.0, 1.0),
            };
            let u = StructuredBD::staircase(e(0), e(1), &st).unwrap();
            let b = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
            let em = u.emeasure();
            assert_eq!(em.singular_atoms.len(), 1 << depth);
            assert_abs_diff_eq!(em.singular_mass(&b).unwrap(), 0.5f64.sqrt(), epsilon = 1e-14);
            assert_abs_diff_eq!(u.total_variation(&b).unwrap(), 0.5f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn staircase_refinement_preserves_mass_and_is_monotone() {
        for depth in 1..8u32 {
            let a = CantorProfile { depth, total_mass: 2.0, support: (-1.0, 2.0) }.atoms();
            let b = CantorProfile { depth: depth + 1, total_mass: 2.0, support: (-1.0, 2.0) }.atoms();
            let ma: f64 = a.iter().map(|x| x.1).sum();
            let mb: f64 = b.iter().map(|x| x.1).sum();
            assert_eq!(ma, 2.0);
            assert_eq!(mb, 2.0);
            // Each depth-d interval splits its atom between two children inside it.
            for (i, (t, _)) in a.iter().enumerate() {
                let w = 3.0 / 3f64.powi(depth as i32);
                assert!((b[2 * i].0 - t).abs() < w / 2.0);
                assert!((b[2 * i + 1].0 - t).abs() < w / 2.0);
            }
            assert!(b.windows(2).all(|w| w[0].0 < w[1].0));
        }
        let p = Profile::staircase(e(0), e(1), &CantorProfile { depth: 4, total_mass: 1.0, support: (0.0, 1.0) }, 0.0).unwrap();
        // Zero average over the support.
        let mean = crate::quadrature::integrate_1d(0.0, 1.0, &p.atoms.iter().map(|a| a.0).collect::<Vec<_>>(), 1, 1, |t| p.psi(t));
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn traces_and_orientation() {
        let vm = [1.0, 2.0];
        let vp = [3.0, -1.0];
        let u = StructuredBD::two_state(&vm, &vp, &e(0), &[0.0, 0.0]).unwrap();
        let (m, p, n) = u.trace_pair(0).unwrap();
        assert_eq!((m.as_slice(), p.as_slice(), n.as_slice()), (&vm[..], &vp[..], &e(0)[..]));
        let (m, p, n) = u.trace_pair_oriented(0, &[0.0, 0.3], &[-1.0, 0.0]).unwrap();
        assert_eq!((m.as_slice(), p.as_slice()), (&vp[..], &vm[..]));
        assert_eq!(n, vec![-1.0, 0.0]);

        // Jump superposed on an affine part.
        let a = Mat::new2(0.5, 1.0, -2.0, 0.25);
        let w = StructuredBD::new(
            2,
            vec![SmoothTerm::Affine { a, v: vec![0.0, 1.0] }],
            vec![Jump { normal: vec![0.0, 1.0], offset: 0.2, delta: vec![0.7, -0.3], closed: true }],
            None,
        )
        .unwrap();
        let (m, p, _) = w.trace_pair_at(0, &[0.4, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0] - m[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1] - m[1], -0.3, epsilon = 1e-15);
        let x = [0.4, 0.2];
        let base = a.mul_vec(&x);
        assert_abs_diff_eq!(m[0], base[0], epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], base[1] + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_canonical_normal_is_flipped_without_changing_the_field() {
        let j = Jump { normal: vec![-1.0, 0.0], offset: 0.1, delta: vec![1.0, 2.0], closed: true };
        let u = StructuredBD::new(2, vec![], vec![j.clone()], None).unwrap();
        assert!(is_canonical(&u.jumps()[0].normal));
        for x in [[-0.5, 0.0], [0.5, 0.1], [-0.1, 0.3], [-0.2, 0.0]] {
            let h = if -x[0] >= 0.1 { 1.0 } else { 0.0 };
            assert_eq!(u.eval(&x), vec![h * 1.0, h * 2.0]);
        }
    }

    #[test]
    fn duplicate_planes_rejected() {
        let j = Jump { normal: vec![1.0, 0.0], offset: 0.1, delta: vec![1.0, 0.0], closed: true };
        assert!(StructuredBD::new(2, vec![], vec![j.clone(), j], None).is_err());
        let bad = Jump { normal: vec![1.0, 1.0], offset: 0.0, delta: vec![1.0, 0.0], closed: true };
        assert!(StructuredBD::new(2, vec![], vec![bad], None).is_err());
    }

    #[test]
    fn smooth_means_and_gradient_integrals_match_quadrature() {
        let h = vec![Mat::new2(1.0, 0.5, 0.5, -2.0), Mat::new2(0.0, 1.0, 1.0, 3.0)];
        let terms = vec![
            SmoothTerm::Quadratic { h },
            sinusoid(vec![0.3, -0.7], vec![1.3, 0.4], 0.2),
            SmoothTerm::Affine { a: Mat::new2(1.0, 2.0, 3.0, 4.0), v: vec![0.1, 0.2] },
        ];
        let b = Aabb::new(vec![-0.3, 0.1], vec![0.9, 0.6]).unwrap();
        for t in &terms {
            let mean = t.mean(&b);
            let gi = t.grad_integral(&b);
            for i in 0..2 {
                let q = integrate_box(&b.lo, &b.hi, &[vec![], vec![]], 4, 8, &mut |x| {
                    let mut o = [0.0; 2];
                    t.add_eval(x, &mut o);
                    o[i]
                }) / b.volume();
                assert_abs_diff_eq!(mean[i], q, epsilon = 1e-13);
                for j in 0..2 {
                    let q = integrate_box(&b.lo, &b.hi, &[vec![], vec![]], 4, 8, &mut |x| {
                        let mut g = Mat::zeros(2);
                        t.add_grad(x, &mut g);
                        g[(i, j)]
                    });
                    assert_abs_diff_eq!(gi[(i, j)], q, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn rescaling_composes_pointwise() {
        let st = CantorProfile { depth: 3, total_mass: 1.0, support: (0.0, 1.0) };
        let mut p = Profile::staircase(e(0), vec![0.6, 0.8], &st, 0.4).unwrap();
        p.base = 0.1;
        let u = StructuredBD::new(
            2,
            vec![
                SmoothTerm::Quadratic { h: vec![Mat::new2(1.0, 0.0, 0.0, 2.0), Mat::new2(0.0, 1.0, 1.0, 0.0)] },
                sinusoid(vec![1.0, 0.5], vec![0.5, 1.0], 0.3),
            ],
            vec![Jump { normal: vec![0.0, 1.0], offset: 0.05, delta: vec![1.0, -1.0], closed: true }],
            Some(p),
        )
        .unwrap();
        let x0 = [0.31, -0.07];
        let (eps, lam) = (0.3, 2.5);
        let r = u.rescaled(&x0, eps, lam).unwrap();
        for y in [[0.1, 0.2], [-0.37, 0.41], [0.49, -0.3]] {
            let x: Vec<f64> = (0..2).map(|i| x0[i] + eps * y[i]).collect();
            let a = u.eval(&x);
            let b = r.eval(&y);
            for i in 0..2 {
                assert_abs_diff_eq!(lam * a[i], b[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn json_spec_roundtrip() {
        let s = r#"{"dim":2,
            "smooth":[{"type":"affine","a":[[1,0],[0,2]],"v":[0,0]}],
            "jumps":[{"normal":[1,0],"offset":0.1,"delta":[0,1]}],
            "profile":{"eta":[0,1],"xi":[1,0],"staircase":{"depth":2,"total_mass":1.0,"support":[-0.25,0.25]}}}"#;
        let u = StructuredBD::from_json(s).unwrap();
        assert_eq!(u.jumps().len(), 1);
        assert_eq!(u.profile().unwrap().atoms.len(), 4);
        let back: StructuredBD = serde_json::from_str(&serde_json::to_string(&u).unwrap_or_default()).unwrap_or(u.clone());
        assert_eq!(back.dim(), 2);
        let z = StructuredBD::from_json(r#"{"dim":2,"smooth":"zero"}"#).unwrap();
        assert_eq!(z, StructuredBD::zero(2));
        assert!(StructuredBD::from_json(r#"{"dim":2,"smooth":"one"}"#).is_err());
    }
}
