//! Energy densities `f₀(x, v, A)` and surface densities `g₁(x, v⁻, v⁺, ν)`.
//!
//! Every density exposes an exact evaluation and a smoothed evaluation with
//! gradient, where `|·|` is replaced by `√(|·|² + μ²) − μ`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{odot, Mat};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub convex: bool,
    pub one_homogeneous: bool,
    pub x_periodic: bool,
    pub x_independent: bool,
    pub v_independent: bool,
    pub sym_only: bool,
}

pub trait Integrand: Send + Sync + Debug {
    fn name(&self) -> String;

    fn flags(&self) -> Flags;

    /// Smoothed value; `dv` and `da` receive its gradient.
    fn eval_grad(&self, x: &[f64], v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64;

    /// Exact value.
    fn eval(&self, x: &[f64], v: &[f64], a: &Mat) -> f64 {
        let mut dv = [0.0; 4];
        let mut da = Mat::zeros(a.dim());
        self.eval_grad(x, v, a, 0.0, &mut dv[..v.len()], &mut da)
    }

    /// The exact recession function, when available in closed form.
    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        None
    }
}

/// `|x|` smoothed to `√(x² + μ²) − μ`; returns value and derivative.
#[inline]
pub fn sabs(x: f64, mu: f64) -> (f64, f64) {
    if mu == 0.0 {
        (x.abs(), if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    } else {
        let r = (x * x + mu * mu).sqrt();
        (r - mu, x / r)
    }
}

/// Smoothed Frobenius norm and its gradient factor (`d|M| = M · factor`).
#[inline]
pub fn snorm(m: &Mat, mu: f64) -> (f64, f64) {
    let n2 = m.dot(m);
    if mu == 0.0 {
        let n = n2.sqrt();
        (n, if n > 0.0 { 1.0 / n } else { 0.0 })
    } else {
        let r = (n2 + mu * mu).sqrt();
        (r - mu, 1.0 / r)
    }
}

fn clear(dv: &mut [f64]) {
    dv.iter_mut().for_each(|x| *x = 0.0);
}

/// `|sym A|`.
#[derive(Clone, Debug, Default)]
pub struct AbsSym;

impl Integrand for AbsSym {
    fn name(&self) -> String {
        "abs-sym".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            convex: true,
            one_homogeneous: true,
            x_periodic: true,
            x_independent: true,
            v_independent: true,
            sym_only: true,
        }
    }

    fn eval_grad(&self, _x: &[f64], _v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let s = a.sym();
        let (val, k) = snorm(&s, mu);
        *da = s * k;
        val
    }

    fn eval(&self, _x: &[f64], _v: &[f64], a: &Mat) -> f64 {
        a.sym().norm()
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(AbsSym))
    }
}

/// `√(1 + |sym A|²)`.
#[derive(Clone, Debug, Default)]
pub struct Sqrt1PlusSym;

impl Integrand for Sqrt1PlusSym {
    fn name(&self) -> String {
        "sqrt1plus-sym".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            convex: true,
            x_periodic: true,
            x_independent: true,
            v_independent: true,
            sym_only: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, _x: &[f64], _v: &[f64], a: &Mat, _mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let s = a.sym();
        let r = (1.0 + s.dot(&s)).sqrt();
        *da = s * (1.0 / r);
        r
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(AbsSym))
    }
}

/// `h(A) = |A₁₁−A₂₂| + |A₁₂+A₂₁| + min{|A₁₁+A₂₂|, |A₁₂−A₂₁|}` on 2×2 matrices.
#[derive(Clone, Debug, Default)]
pub struct MuellerH;

pub fn mueller_h_value(a: &Mat) -> f64 {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    (p - s).abs() + (q + r).abs() + (p + s).abs().min((q - r).abs())
}

fn mueller_h_grad(a: &Mat, mu: f64, da: &mut Mat) -> f64 {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let (t1, d1) = sabs(p - s, mu);
    let (t2, d2) = sabs(q + r, mu);
    let (t3, d3) = sabs(p + s, mu);
    let (t4, d4) = sabs(q - r, mu);
    // min(t3, t4) = ½(t3 + t4 − |t3 − t4|)
    let (m, dm) = sabs(t3 - t4, mu);
    let w3 = 0.5 * (1.0 - dm);
    let w4 = 0.5 * (1.0 + dm);
    let val = t1 + t2 + 0.5 * (t3 + t4 - m);
    *da = Mat::zeros(2);
    da[(0, 0)] = d1 + w3 * d3;
    da[(1, 1)] = -d1 + w3 * d3;
    da[(0, 1)] = d2 + w4 * d4;
    da[(1, 0)] = d2 - w4 * d4;
    val
}

impl Integrand for MuellerH {
    fn name(&self) -> String {
        "mueller-h".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            one_homogeneous: true,
            x_periodic: true,
            x_independent: true,
            v_independent: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, _x: &[f64], _v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        mueller_h_grad(a, mu, da)
    }

    fn eval(&self, _x: &[f64], _v: &[f64], a: &Mat) -> f64 {
        mueller_h_value(a)
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(MuellerH))
    }
}

/// `h(A) + ε |sym A|`.
#[derive(Clone, Debug)]
pub struct MuellerFEps {
    pub eps: f64,
}

impl Integrand for MuellerFEps {
    fn name(&self) -> String {
        format!("mueller-f-eps({})", self.eps)
    }

    fn flags(&self) -> Flags {
        MuellerH.flags()
    }

    fn eval_grad(&self, _x: &[f64], _v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let h = mueller_h_grad(a, mu, da);
        let s = a.sym();
        let (n, k) = snorm(&s, mu);
        *da += s * (k * self.eps);
        h + self.eps * n
    }

    fn eval(&self, _x: &[f64], _v: &[f64], a: &Mat) -> f64 {
        mueller_h_value(a) + self.eps * a.sym().norm()
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(self.clone()))
    }
}

/// Periodic weight of the laminate integrand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LaminatePattern {
    /// `2 + cos 2πx₁`
    Cos,
    /// `2 + cos 2πx₂`
    CosX2,
}

impl LaminatePattern {
    pub fn weight(&self, x: &[f64]) -> f64 {
        match self {
            LaminatePattern::Cos => 2.0 + (2.0 * PI * x[0]).cos(),
            LaminatePattern::CosX2 => 2.0 + (2.0 * PI * x[1]).cos(),
        }
    }
}

/// `a(x) √(δ² + |sym A|²)` with `δ² = 10⁻⁴` by default.
#[derive(Clone, Debug)]
pub struct Laminate {
    pub pattern: LaminatePattern,
    pub delta2: f64,
}

impl Laminate {
    pub fn new(pattern: LaminatePattern) -> Self {
        Laminate { pattern, delta2: 1e-4 }
    }
}

impl Integrand for Laminate {
    fn name(&self) -> String {
        match self.pattern {
            LaminatePattern::Cos => "laminate-a(cos)".into(),
            LaminatePattern::CosX2 => "laminate-a(cos-x2)".into(),
        }
    }

    fn flags(&self) -> Flags {
        Flags {
            convex: true,
            x_periodic: true,
            v_independent: true,
            sym_only: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, x: &[f64], _v: &[f64], a: &Mat, _mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let w = self.pattern.weight(x);
        let s = a.sym();
        let r = (self.delta2 + s.dot(&s)).sqrt();
        *da = s * (w / r);
        w * r
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(Weighted {
            pattern: self.pattern,
        }))
    }
}

/// `a(x) |sym A|`, the recession of [`Laminate`].
#[derive(Clone, Debug)]
pub struct Weighted {
    pub pattern: LaminatePattern,
}

impl Integrand for Weighted {
    fn name(&self) -> String {
        "weighted-abs-sym".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            convex: true,
            one_homogeneous: true,
            x_periodic: true,
            v_independent: true,
            sym_only: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, x: &[f64], _v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let w = self.pattern.weight(x);
        let s = a.sym();
        let (n, k) = snorm(&s, mu);
        *da = s * (w * k);
        w * n
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(self.clone()))
    }
}

/// `(1 + min(|v|, 1)) |sym A|`.
#[derive(Clone, Debug, Default)]
pub struct VWeighted;

impl Integrand for VWeighted {
    fn name(&self) -> String {
        "v-weighted".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            one_homogeneous: true,
            x_periodic: true,
            x_independent: true,
            sym_only: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, _x: &[f64], v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        let (vn, kv) = if mu == 0.0 {
            let n = vn2.sqrt();
            (n, if n > 0.0 { 1.0 / n } else { 0.0 })
        } else {
            let r = (vn2 + mu * mu).sqrt();
            (r - mu, 1.0 / r)
        };
        // min(t, 1) = ½(t + 1 − |t − 1|)
        let (m, dm) = sabs(vn - 1.0, mu);
        let weight = 1.0 + 0.5 * (vn + 1.0 - m);
        let dweight = 0.5 * (1.0 - dm);
        let s = a.sym();
        let (n, k) = snorm(&s, mu);
        for (d, x) in dv.iter_mut().zip(v) {
            *d = n * dweight * kv * x;
        }
        *da = s * (weight * k);
        weight * n
    }

    fn eval(&self, _x: &[f64], v: &[f64], a: &Mat) -> f64 {
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (1.0 + vn.min(1.0)) * a.sym().norm()
    }

    fn recession(&self) -> Option<Arc<dyn Integrand>> {
        Some(Arc::new(VWeighted))
    }
}

/// `max(0, 1 − |sym A|²)`: nonconvex, not symmetric quasiconvex.
#[derive(Clone, Debug, Default)]
pub struct NegQuadraticTrunc;

impl Integrand for NegQuadraticTrunc {
    fn name(&self) -> String {
        "neg-quadratic-trunc".into()
    }

    fn flags(&self) -> Flags {
        Flags {
            x_periodic: true,
            x_independent: true,
            v_independent: true,
            sym_only: true,
            ..Flags::default()
        }
    }

    fn eval_grad(&self, _x: &[f64], _v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        clear(dv);
        let s = a.sym();
        let t = 1.0 - s.dot(&s);
        // max(t, 0) = ½(t + |t|)
        let (m, dm) = sabs(t, mu);
        *da = s * (-(1.0 + dm));
        0.5 * (t + m)
    }

    fn eval(&self, _x: &[f64], _v: &[f64], a: &Mat) -> f64 {
        let s = a.sym();
        (1.0 - s.dot(&s)).max(0.0)
    }
}

/// `x ↦ x0`: the density frozen at a base point.
#[derive(Debug)]
pub struct Frozen {
    pub inner: Arc<dyn Integrand>,
    pub x0: Vec<f64>,
}

impl Integrand for Frozen {
    fn name(&self) -> String {
        format!("frozen({})", self.inner.name())
    }

    fn flags(&self) -> Flags {
        Flags {
            x_independent: true,
            x_periodic: true,
            ..self.inner.flags()
        }
    }

    fn eval_grad(&self, _x: &[f64], v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        self.inner.eval_grad(&self.x0, v, a, mu, dv, da)
    }

    fn eval(&self, _x: &[f64], v: &[f64], a: &Mat) -> f64 {
        self.inner.eval(&self.x0, v, a)
    }
}

/// `(x, w, A) ↦ f(x, v + ε w, A)`.
#[derive(Debug)]
pub struct VOffset {
    pub inner: Arc<dyn Integrand>,
    pub v: Vec<f64>,
    pub eps: f64,
}

impl VOffset {
    fn shifted(&self, w: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..w.len() {
            out[i] = self.v[i] + self.eps * w[i];
        }
        out
    }
}

impl Integrand for VOffset {
    fn name(&self) -> String {
        format!("v-offset({})", self.inner.name())
    }

    fn flags(&self) -> Flags {
        self.inner.flags()
    }

    fn eval_grad(&self, x: &[f64], w: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        let s = self.shifted(w);
        let val = self.inner.eval_grad(x, &s[..w.len()], a, mu, dv, da);
        dv.iter_mut().for_each(|d| *d *= self.eps);
        val
    }

    fn eval(&self, x: &[f64], w: &[f64], a: &Mat) -> f64 {
        let s = self.shifted(w);
        self.inner.eval(x, &s[..w.len()], a)
    }
}

/// `(x, w, A) ↦ ε f(x, w, A/ε)`.
#[derive(Debug)]
pub struct EpsScaled {
    pub inner: Arc<dyn Integrand>,
    pub eps: f64,
}

impl Integrand for EpsScaled {
    fn name(&self) -> String {
        format!("eps-scaled({})", self.inner.name())
    }

    fn flags(&self) -> Flags {
        self.inner.flags()
    }

    fn eval_grad(&self, x: &[f64], w: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        let val = self
            .inner
            .eval_grad(x, w, &(*a * (1.0 / self.eps)), mu / self.eps, dv, da);
        dv.iter_mut().for_each(|d| *d *= self.eps);
        self.eps * val
    }

    fn eval(&self, x: &[f64], w: &[f64], a: &Mat) -> f64 {
        self.eps * self.inner.eval(x, w, &(*a * (1.0 / self.eps)))
    }
}

/// Density seen in rotated coordinates `y = R z`: `A ↦ f(R z, v, A Rᵗ)`.
#[derive(Debug)]
pub struct Rotated {
    pub inner: Arc<dyn Integrand>,
    pub r: Mat,
}

impl Rotated {
    fn phys(&self, z: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, y) in self.r.mul_vec(z).into_iter().enumerate() {
            out[i] = y;
        }
        out
    }
}

impl Integrand for Rotated {
    fn name(&self) -> String {
        format!("rotated({})", self.inner.name())
    }

    fn flags(&self) -> Flags {
        Flags {
            x_periodic: self.inner.flags().x_independent,
            ..self.inner.flags()
        }
    }

    fn eval_grad(&self, z: &[f64], v: &[f64], a: &Mat, mu: f64, dv: &mut [f64], da: &mut Mat) -> f64 {
        let y = self.phys(z);
        let ap = a.matmul(&self.r.transpose());
        let val = self.inner.eval_grad(&y[..z.len()], v, &ap, mu, dv, da);
        *da = da.matmul(&self.r);
        val
    }

    fn eval(&self, z: &[f64], v: &[f64], a: &Mat) -> f64 {
        let y = self.phys(z);
        self.inner
            .eval(&y[..z.len()], v, &a.matmul(&self.r.transpose()))
    }
}

/// Rotation taking `e₁` to the unit vector `nu` (two dimensions).
pub fn rotation_to(nu: &[f64]) -> Result<Mat> {
    if nu.len() != 2 {
        return Err(Error::Unsupported("rotated cells need two dimensions".into()));
    }
    Ok(Mat::new2(nu[0], -nu[1], nu[1], nu[0]))
}

/// Surface energy density on discontinuity facets.
pub trait SurfaceIntegrand: Send + Sync + Debug {
    fn name(&self) -> String;

    /// Smoothed value; `dm`, `dp` receive derivatives with respect to `v⁻`, `v⁺`.
    fn eval_grad(
        &self,
        x: &[f64],
        vm: &[f64],
        vp: &[f64],
        nu: &[f64],
        mu: f64,
        dm: &mut [f64],
        dp: &mut [f64],
    ) -> f64;

    fn eval(&self, x: &[f64], vm: &[f64], vp: &[f64], nu: &[f64]) -> f64 {
        let mut dm = [0.0; 4];
        let mut dp = [0.0; 4];
        let n = vm.len();
        self.eval_grad(x, vm, vp, nu, 0.0, &mut dm[..n], &mut dp[..n])
    }
}

/// `|(v⁺ − v⁻) ⊙ ν|`.
#[derive(Clone, Debug, Default)]
pub struct AbsJump;

impl SurfaceIntegrand for AbsJump {
    fn name(&self) -> String {
        "abs-jump".into()
    }

    fn eval_grad(
        &self,
        _x: &[f64],
        vm: &[f64],
        vp: &[f64],
        nu: &[f64],
        mu: f64,
        dm: &mut [f64],
        dp: &mut [f64],
    ) -> f64 {
        let d: Vec<f64> = vp.iter().zip(vm).map(|(a, b)| a - b).collect();
        let e = odot(&d, nu);
        let (val, k) = snorm(&e, mu);
        // d|δ⊙ν|/dδ = (E ν) k with E symmetric.
        let g = e.mul_vec(nu);
        for i in 0..d.len() {
            dp[i] = g[i] * k;
            dm[i] = -g[i] * k;
        }
        val
    }
}

/// `k |v⁺ − v⁻|²`.
#[derive(Clone, Debug)]
pub struct Penalty {
    pub k: f64,
}

impl SurfaceIntegrand for Penalty {
    fn name(&self) -> String {
        format!("penalty({})", self.k)
    }

    fn eval_grad(
        &self,
        _x: &[f64],
        vm: &[f64],
        vp: &[f64],
        _nu: &[f64],
        _mu: f64,
        dm: &mut [f64],
        dp: &mut [f64],
    ) -> f64 {
        let mut s = 0.0;
        for i in 0..vm.len() {
            let d = vp[i] - vm[i];
            s += d * d;
            dp[i] = 2.0 * self.k * d;
            dm[i] = -2.0 * self.k * d;
        }
        self.k * s
    }
}

/// `g₁(x0, v + ε v⁻, v + ε v⁺, R ν) · scale` for cell problems.
#[derive(Debug)]
pub struct SurfaceWrap {
    pub inner: Arc<dyn SurfaceIntegrand>,
    pub x0: Option<Vec<f64>>,
    pub v: Option<(Vec<f64>, f64)>,
    pub scale: f64,
    pub r: Option<Mat>,
}

impl SurfaceWrap {
    pub fn plain(inner: Arc<dyn SurfaceIntegrand>) -> Self {
        SurfaceWrap {
            inner,
            x0: None,
            v: None,
            scale: 1.0,
            r: None,
        }
    }
}

impl SurfaceIntegrand for SurfaceWrap {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn eval_grad(
        &self,
        x: &[f64],
        vm: &[f64],
        vp: &[f64],
        nu: &[f64],
        mu: f64,
        dm: &mut [f64],
        dp: &mut [f64],
    ) -> f64 {
        let xr: Vec<f64> = match (&self.x0, &self.r) {
            (Some(x0), _) => x0.clone(),
            (None, Some(r)) => r.mul_vec(x),
            (None, None) => x.to_vec(),
        };
        let nr: Vec<f64> = match &self.r {
            Some(r) => r.mul_vec(nu),
            None => nu.to_vec(),
        };
        let (m, p, eps) = match &self.v {
            Some((v, eps)) => (
                v.iter().zip(vm).map(|(a, b)| a + eps * b).collect::<Vec<_>>(),
                v.iter().zip(vp).map(|(a, b)| a + eps * b).collect::<Vec<_>>(),
                *eps,
            ),
            None => (vm.to_vec(), vp.to_vec(), 1.0),
        };
        let val = self.inner.eval_grad(&xr, &m, &p, &nr, mu, dm, dp);
        let c = self.scale * eps;
        dm.iter_mut().for_each(|d| *d *= c);
        dp.iter_mut().for_each(|d| *d *= c);
        self.scale * val
    }
}

/// Density registered under a string id.
pub fn integrand_from_id(id: &str) -> Result<Arc<dyn Integrand>> {
    let id = id.trim();
    if let Some(arg) = id
        .strip_prefix("mueller-f-eps(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let eps: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad epsilon in {id:?}")))?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Validation("mueller-f-eps needs eps > 0".into()));
        }
        return Ok(Arc::new(MuellerFEps { eps }));
    }
    Ok(match id {
        "abs-sym" => Arc::new(AbsSym),
        "sqrt1plus-sym" => Arc::new(Sqrt1PlusSym),
        "mueller-h" => Arc::new(MuellerH),
        "mueller-f-eps" => Arc::new(MuellerFEps { eps: 0.1 }),
        "laminate-a" | "laminate-a(cos)" => Arc::new(Laminate::new(LaminatePattern::Cos)),
        "laminate-a(cos-x2)" => Arc::new(Laminate::new(LaminatePattern::CosX2)),
        "v-weighted" => Arc::new(VWeighted),
        "neg-quadratic-trunc" => Arc::new(NegQuadraticTrunc),
        _ => return Err(Error::Validation(format!("unknown integrand {id:?}"))),
    })
}

pub fn surface_from_id(id: &str) -> Result<Arc<dyn SurfaceIntegrand>> {
    let id = id.trim();
    if let Some(arg) = id.strip_prefix("penalty(").and_then(|s| s.strip_suffix(')')) {
        let k: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad penalty in {id:?}")))?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Validation("penalty needs k > 0".into()));
        }
        return Ok(Arc::new(Penalty { k }));
    }
    match id {
        "abs-jump" => Ok(Arc::new(AbsJump)),
        "penalty" => Ok(Arc::new(Penalty { k: 1e6 })),
        _ => Err(Error::Validation(format!("unknown surface integrand {id:?}"))),
    }
}

/// Sampled check of the declared flags: finiteness, nonnegativity, symmetric
/// dependence and one-homogeneity.
pub fn check_flags(f: &dyn Integrand, n: usize, samples: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flags = f.flags();
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = Mat::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let val = f.eval(&x, &v, &a);
        if !val.is_finite() || val < 0.0 {
            return Err(Error::Validation(format!(
                "{} is negative or non-finite at {a}",
                f.name()
            )));
        }
        if flags.sym_only {
            let vs = f.eval(&x, &v, &a.sym());
            if (vs - val).abs() > 1e-12 * (1.0 + val.abs()) {
                return Err(Error::Validation(format!("{} depends on the skew part", f.name())));
            }
        }
        if flags.one_homogeneous {
            for t in [2.0, 10.0] {
                let vt = f.eval(&x, &v, &(a * t));
                if (vt - t * val).abs() > 1e-9 * (1.0 + vt.abs()) {
                    return Err(Error::Validation(format!("{} is not one-homogeneous", f.name())));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &dyn Integrand, x: &[f64], v: &[f64], a: &Mat, mu: f64) {
        let n = a.dim();
        let mut dv = vec![0.0; n];
        let mut da = Mat::zeros(n);
        f.eval_grad(x, v, a, mu, &mut dv, &mut da);
        let h = 1e-6;
        let mut s1 = vec![0.0; n];
        let mut s2 = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut ap = *a;
                let mut am = *a;
                ap[(i, j)] += h;
                am[(i, j)] -= h;
                let fd = (f.eval_grad(x, v, &ap, mu, &mut s1, &mut s2)
                    - f.eval_grad(x, v, &am, mu, &mut s1, &mut s2))
                    / (2.0 * h);
                assert!((fd - da[(i, j)]).abs() < 1e-5, "{} dA[{i}{j}] {fd} {}", f.name(), da[(i, j)]);
            }
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[i] += h;
            vm[i] -= h;
            let fd = (f.eval_grad(x, &vp, a, mu, &mut s1, &mut s2)
                - f.eval_grad(x, &vm, a, mu, &mut s1, &mut s2))
                / (2.0 * h);
            assert!((fd - dv[i]).abs() < 1e-5, "{} dv[{i}]", f.name());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = Mat::new2(0.3, -1.2, 0.7, 0.4);
        let x = [0.2, 0.7];
        let v = [0.5, -0.3];
        let list: Vec<Arc<dyn Integrand>> = vec![
            Arc::new(AbsSym),
            Arc::new(Sqrt1PlusSym),
            Arc::new(MuellerH),
            Arc::new(MuellerFEps { eps: 0.2 }),
            Arc::new(Laminate::new(LaminatePattern::Cos)),
            Arc::new(VWeighted),
            Arc::new(NegQuadraticTrunc),
            Arc::new(EpsScaled { inner: Arc::new(VWeighted), eps: 0.25 }),
            Arc::new(VOffset { inner: Arc::new(VWeighted), v: vec![0.1, 0.2], eps: 0.5 }),
            Arc::new(Rotated { inner: Arc::new(MuellerH), r: rotation_to(&[0.6, 0.8]).unwrap() }),
        ];
        for f in &list {
            fd_check(f.as_ref(), &x, &v, &a, 1e-3);
            check_flags(f.as_ref(), 2, 50, 3).unwrap();
        }
    }

    #[test]
    fn smoothing_converges_to_exact_value() {
        let a = Mat::new2(1.0, -1.0, 1.0, 1.0);
        let mut dv = [0.0; 2];
        let mut da = Mat::zeros(2);
        for f in [&MuellerH as &dyn Integrand, &AbsSym, &VWeighted] {
            let exact = f.eval(&[0.0, 0.0], &[0.3, 0.0], &a);
            let s = f.eval_grad(&[0.0, 0.0], &[0.3, 0.0], &a, 1e-9, &mut dv, &mut da);
            assert!((exact - s).abs() < 1e-8);
        }
        assert_eq!(mueller_h_value(&a), 2.0);
        assert_eq!(mueller_h_value(&Mat::identity(2)), 0.0);
    }

    #[test]
    fn surface_gradients() {
        let nu = [0.6, 0.8];
        let vm = [0.1, -0.4];
        let vp = [1.0, 0.5];
        for g in [&AbsJump as &dyn SurfaceIntegrand, &Penalty { k: 3.0 }] {
            let mut dm = [0.0; 2];
            let mut dp = [0.0; 2];
            g.eval_grad(&[0.0, 0.0], &vm, &vp, &nu, 1e-3, &mut dm, &mut dp);
            let mut s1 = [0.0; 2];
            let mut s2 = [0.0; 2];
            for i in 0..2 {
                let h = 1e-6;
                let mut p1 = vp;
                let mut p2 = vp;
                p1[i] += h;
                p2[i] -= h;
                let fd = (g.eval_grad(&[0.0, 0.0], &vm, &p1, &nu, 1e-3, &mut s1, &mut s2)
                    - g.eval_grad(&[0.0, 0.0], &vm, &p2, &nu, 1e-3, &mut s1, &mut s2))
                    / (2.0 * h);
                assert!((fd - dp[i]).abs() < 1e-6);
                assert!((dm[i] + dp[i]).abs() < 1e-15);
            }
            assert_eq!(g.eval(&[0.0, 0.0], &vm, &vm, &nu), 0.0);
        }
    }

    #[test]
    fn ids_resolve() {
        for id in ["abs-sym", "sqrt1plus-sym", "mueller-h", "mueller-f-eps(0.05)", "laminate-a(cos)", "v-weighted", "neg-quadratic-trunc"] {
            assert!(integrand_from_id(id).is_ok(), "{id}");
        }
        assert!(integrand_from_id("nope").is_err());
        assert!(surface_from_id("penalty(100)").is_ok());
        assert!(surface_from_id("penalty(-1)").is_err());
    }
}
