//! End-to-end checks of the library, one per numbered criterion. Each returns
//! a pass flag, a one-line detail and its wall time against a budget.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bdmodel::{sinusoid, CantorProfile, SmoothTerm, StructuredBD};
use crate::blowup::{normalize_profile, rescale, BlowupFrame, ProfilePair};
use crate::cellsolver::integrand::{AbsSym, Laminate, LaminatePattern, Sqrt1PlusSym};
use crate::cellsolver::{solve_ld, BoundaryData, CellSpec, Integrand, SolverOptions};
use crate::density::{self, abs_sym_jump, JumpForm};
use crate::error::Result;
use crate::geometry::Aabb;
use crate::homog::{fhom_dirichlet, fhom_periodic, fold_competitor, fold_identity, HomogSpec};
use crate::represent::relaxation_upper_check;
use crate::rigid::{korn_ratio, m_k_boundary, m_k_volume, rigid_projection};
use crate::tensor::Mat;

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<28} {}  {} [{:.1}s of {:.0}s]",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds,
            self.budget_seconds
        )
    }
}

pub const COUNT: u8 = 10;

const NAMES: [&str; 10] = [
    "rigid-invariance",
    "skew-moment-cross-formula",
    "convex-cell-exactness",
    "mueller-suite",
    "jump-recession-consistency",
    "homogenization-cross-formula",
    "folding-identity",
    "blowup-algebra",
    "korn-scaling",
    "representation-vs-relaxation",
];

const BUDGETS: [f64; 10] = [1.0, 10.0, 30.0, 300.0, 180.0, 600.0, 60.0, 10.0, 30.0, 120.0];

/// Runs criterion `id` (1-based).
pub fn run(id: u8, seed: u64) -> Criterion {
    let start = Instant::now();
    let outcome = match id {
        1 => rigid_invariance(seed),
        2 => skew_moment(seed),
        3 => jensen(seed),
        4 => mueller(seed),
        5 => jump_recession(seed),
        6 => homogenization(seed),
        7 => folding(seed),
        8 => blowup_algebra(seed),
        9 => korn(),
        10 => representation(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let idx = (id.clamp(1, COUNT) - 1) as usize;
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion {
        id,
        name: NAMES[idx],
        passed: passed && seconds <= BUDGETS[idx],
        detail,
        seconds,
        budget_seconds: BUDGETS[idx],
    }
}

pub fn run_all(seed: u64) -> Vec<Criterion> {
    (1..=COUNT).map(|id| run(id, seed)).collect()
}

type Outcome = Result<(bool, String)>;

fn random_sym(rng: &mut ChaCha8Rng) -> Mat {
    let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    Mat::new2(a, b, b, c)
}

fn rigid_invariance(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = Aabb::unit_centered(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = rng.random_range(-5.0..5.0);
        let l = Mat::new2(0.0, -w, w, 0.0);
        let v = vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let u = StructuredBD::affine(l, v)?;
        let r = rigid_projection(&u, &k)?;
        for i in 0..=4 {
            for j in 0..=4 {
                let x = [-0.5 + 0.25 * i as f64, -0.5 + 0.25 * j as f64];
                let (a, b) = (u.eval(&x), r.eval(&x));
                worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max |R[u] - u| = {worst:.2e} over 100 rigid fields")))
}

fn skew_moment(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let mut min_order = f64::INFINITY;
    for _ in 0..20 {
        let mut r = || rng.random_range(-1.5..1.5);
        let terms = vec![
            sinusoid(vec![r(), r()], vec![r(), r()], r()),
            SmoothTerm::Quadratic {
                h: vec![
                    {
                        let b = r();
                        Mat::new2(r(), b, b, r())
                    },
                    {
                        let b = r();
                        Mat::new2(r(), b, b, r())
                    },
                ],
            },
            SmoothTerm::Affine { a: Mat::new2(r(), r(), r(), r()), v: vec![r(), r()] },
        ];
        let u = StructuredBD::new(2, terms, vec![], None)?;
        let d16 = (m_k_boundary(&u, &k, 16)? - m_k_volume(&u, &k, 16)?).norm();
        let d32 = (m_k_boundary(&u, &k, 32)? - m_k_volume(&u, &k, 32)?).norm();
        // Both formulas at round-off give no order information.
        let order = if d16 <= 1e-13 { f64::INFINITY } else { (d16 / d32).log2() };
        min_order = min_order.min(order);
    }
    Ok((min_order >= 1.8, format!("min observed order {min_order:.2} (h = 1/16 -> 1/32, 20 fields)")))
}

fn jensen(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Arc<dyn Integrand> = Arc::new(AbsSym);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = random_sym(&mut rng);
        let spec = CellSpec::new(Aabb::unit_centered(2), BoundaryData::affine(a), 16);
        let s = solve_ld(&spec, f.clone())?;
        worst = worst.max((s.per_volume - a.norm()).abs());
    }
    Ok((worst <= 1e-4, format!("max |value/|box| - |A|| = {worst:.2e}")))
}

fn mueller(seed: u64) -> Outcome {
    let opts = SolverOptions { multistarts: 8, seed, ..Default::default() };
    let r = density::mueller_suite(&[8, 16, 32], &opts)?;
    let qh_id = r.qh_id.samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let qh_a0: Vec<f64> = r.qh_a0.samples.iter().map(|s| s.1).collect();
    let positive = qh_a0.iter().all(|v| *v > 0.05);
    let ok = r.h_id == 0.0
        && qh_id <= 1e-10
        && r.h_a0 == 2.0
        && positive
        && r.qh_a0.monotone
        && r.witness.verified
        && r.witness.weighted_h == 0.0;
    Ok((
        ok,
        format!(
            "h(Id)={} Qh(Id)<={qh_id:.1e} h(A0)={} Qh(A0)={:?} monotone={} witness={}",
            r.h_id,
            r.h_a0,
            qh_a0.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            r.qh_a0.monotone,
            r.witness.verified
        ),
    ))
}

fn jump_recession(seed: u64) -> Outcome {
    let opts = SolverOptions { seed, ..Default::default() };
    let form = JumpForm::Ld(Arc::new(AbsSym));
    let pairs: [([f64; 2], [f64; 2]); 3] = [([0.0, 1.0], [1.0, 0.0]), ([1.0, 0.0], [0.0, 1.0]), ([1.0, 1.0], [0.6, 0.8])];
    let mut worst = 0.0f64;
    for (dv, nu) in pairs {
        let e = density::jump_density(&form, &[0.0, 0.0], &[0.0, 0.0], &dv, &nu, &[1.0], 32, &opts)?;
        let target = abs_sym_jump(&dv, &nu);
        worst = worst.max((e.extrapolated - target).abs() / target);
    }
    let a = Mat::new2(1.0, 0.5, 0.5, -2.0);
    let f = |x: &[f64], v: &[f64], m: &Mat| Sqrt1PlusSym.eval(x, v, m);
    let rec = density::recession(&f, &[0.0, 0.0], &[0.0, 0.0], &a, &[1e2, 1e3, 1e4])?;
    let rec_err = (rec.last() - a.norm()).abs();
    Ok((
        worst <= 0.05 && rec_err <= 1e-3,
        format!("max rel jump error {worst:.2e}; recession error at t=1e4 {rec_err:.2e}"),
    ))
}

fn homogenization(seed: u64) -> Outcome {
    let a = Mat::new2(1.0, 0.0, 0.0, 0.0);
    let solver = SolverOptions { seed, ..Default::default() };
    let lam = HomogSpec {
        solver: solver.clone(),
        ..HomogSpec::new(Arc::new(Laminate::new(LaminatePattern::Cos)), a, vec![1, 2, 4], 16)
    };
    let periodic = fhom_periodic(&lam)?;
    let dirichlet = fhom_dirichlet(&lam)?;
    let rel = (periodic - dirichlet.extrapolated).abs() / periodic;
    let plain = HomogSpec {
        solver,
        ..HomogSpec::new(Arc::new(Sqrt1PlusSym), Mat::new2(0.7, 0.2, 0.2, -0.4), vec![1, 2, 4], 8)
    };
    let target = Sqrt1PlusSym.eval(&[0.0, 0.0], &[0.0, 0.0], &plain.a);
    let d = fhom_dirichlet(&plain)?;
    let flat = d.samples.iter().map(|s| (s.1 - target).abs()).fold(0.0, f64::max);
    Ok((
        rel <= 0.02 && flat <= 1e-5 && dirichlet.monotone,
        format!(
            "periodic {periodic:.6} vs dirichlet T=1,2,4 {:?} -> {:.6} (rel {rel:.2e}); x-independent max err {flat:.1e}",
            dirichlet.samples.iter().map(|s| format!("{:.4}", s.1)).collect::<Vec<_>>(),
            dirichlet.extrapolated
        ),
    ))
}

fn folding(seed: u64) -> Outcome {
    let f: Arc<dyn Integrand> = Arc::new(Sqrt1PlusSym);
    let opts = SolverOptions { seed, ..Default::default() };
    let (eps, v) = (0.5, [0.3, 1.0]);
    let mut e_gap = 0.0f64;
    let mut m_gap = 0.0f64;
    for j in [1usize, 2, 4] {
        let w = fold_competitor(f.clone(), eps, &v, 32 / j, &opts)?;
        let r = fold_identity(f.as_ref(), &w, j, eps, &v, 32)?;
        e_gap = e_gap.max((r.energy_w - r.energy_wj).abs());
        m_gap = m_gap.max((r.emass_w - r.emass_wj).abs() / r.emass_w);
    }
    Ok((
        e_gap <= 1e-8 && m_gap <= 1e-12,
        format!("max energy gap {e_gap:.1e}; max relative |E| mass gap {m_gap:.1e} (j = 1, 2, 4)"),
    ))
}

fn random_pair(rng: &mut ChaCha8Rng) -> ProfilePair {
    let rho = rng.random_range(0.5..3.0);
    let angle = |rng: &mut ChaCha8Rng| rng.random_range(0.0..std::f64::consts::TAU);
    let a = angle(rng);
    let mut b = angle(rng);
    // Keep ξ away from ±η.
    while ((a - b).sin()).abs() < 1e-3 {
        b = angle(rng);
    }
    let count = rng.random_range(0..6);
    ProfilePair {
        atoms: (0..count)
            .map(|_| (rng.random_range(-0.49..0.49) * rho, rng.random_range(-1.0..1.0)))
            .collect(),
        slope: rng.random_range(-2.0..2.0),
        base: rng.random_range(-1.0..1.0),
        beta_bar: rng.random_range(-2.0..2.0),
        eta: vec![a.cos(), a.sin()],
        xi: vec![b.cos(), b.sin()],
        rho,
        rigid: None,
    }
}

fn blowup_algebra(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut avg, mut balance) = (0.0f64, 0.0f64);
    let mut idempotent = true;
    for _ in 0..1000 {
        let p = random_pair(&mut rng);
        let n = normalize_profile(&p)?;
        avg = avg.max(n.psi.mean().abs());
        balance = balance.max((n.psi.variation() - n.beta * p.rho).abs());
        let again = normalize_profile(&n.psi)?;
        idempotent &= again.psi == n.psi && again.beta == n.beta && again.kappa == 0.0;
    }
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair)?;
    let mut exact = true;
    for level in 1..=5 {
        let frame = BlowupFrame::triadic(vec![0.0, 0.0], Aabb::unit_centered(2), level)?;
        exact &= rescale(&u, &frame, 4)?.exact_equals_volume == Some(true);
    }
    Ok((
        avg <= 1e-12 && balance <= 1e-12 && idempotent && exact,
        format!("max |mean psi| {avg:.1e}; max |D psi - beta rho| {balance:.1e}; idempotent {idempotent}; exact rescaled mass {exact}"),
    ))
}

fn korn() -> Outcome {
    let stair = CantorProfile { depth: 8, total_mass: 1.0, support: (0.0, 1.0) };
    let u = StructuredBD::staircase(vec![1.0, 0.0], vec![0.0, 1.0], &stair)?;
    let k = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let rows = korn_ratio(&u, &k, &[0.0, 0.0], &[1.0, 1.0 / 3.0, 1.0 / 9.0])?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        finite && spread <= 1.5,
        format!("ratios {:?}; max/min {spread:.3}", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()),
    ))
}

fn representation() -> Outcome {
    let b = Aabb::unit_centered(2);
    let u = StructuredBD::two_state(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 0.0])?;
    let jump = relaxation_upper_check(&u, &AbsSym, &b, &[1, 2, 3, 4], 8)?;
    let target = jump.representation.total;
    let at4 = jump.levels.iter().find(|l| l.0 == 4).map(|l| l.1).unwrap_or(f64::NAN);
    let rel = (at4 - target).abs() / target;
    let a = Mat::new2(1.0, 0.4, -0.2, 0.5);
    let aff = StructuredBD::affine(a, vec![0.1, 0.0])?;
    let c = relaxation_upper_check(&aff, &AbsSym, &b, &[1, 2, 3, 4], 4)?;
    let aff_gap = c
        .levels
        .iter()
        .map(|l| (l.1 - c.representation.total).abs())
        .fold(0.0, f64::max);
    Ok((
        rel <= 0.03 && aff_gap <= 1e-12,
        format!("jump: level 4 {at4:.6} vs {target:.6} (rel {rel:.1e}); affine max gap {aff_gap:.1e}"),
    ))
}
