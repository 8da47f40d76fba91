//! Conforming solver: continuous bilinear competitors with Dirichlet or
//! periodic constraints.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::tensor::Mat;

use super::grid::{interpolate, BoundaryData, GaussPoint, Grid, GridDisplacement};
use super::integrand::Integrand;
use super::lbfgs::{minimize, LbfgsOptions, StopReason};

const FIXED: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative gradient tolerance: stop when `|g| ≤ tol (|g₀| + 1)`.
    pub grad_tol: f64,
    pub multistarts: usize,
    pub seed: u64,
    /// Start noise amplitude relative to the data scale times the mesh size.
    pub noise: f64,
    /// Smoothing relative to the data scale.
    pub mu_rel: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 2000,
            grad_tol: 1e-8,
            multistarts: 1,
            seed: 0,
            noise: 0.5,
            mu_rel: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::BadSpec("gradTol must be positive".into()));
        }
        if self.multistarts == 0 {
            return Err(Error::BadSpec("at least one start is needed".into()));
        }
        if !(self.mu_rel >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::BadSpec("smoothing and noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A Dirichlet cell problem.
#[derive(Clone, Debug, Serialize)]
pub struct CellSpec {
    pub bbox: Aabb,
    pub data: BoundaryData,
    pub mesh: usize,
    pub solver: SolverOptions,
}

impl CellSpec {
    pub fn new(bbox: Aabb, data: BoundaryData, mesh: usize) -> Self {
        CellSpec {
            bbox,
            data,
            mesh,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh < 4 {
            return Err(Error::BadSpec("meshPerAxis must be at least 4".into()));
        }
        if self.bbox.dim() != 2 {
            return Err(Error::BadSpec("cell solvers run in two dimensions".into()));
        }
        self.data.validate()?;
        self.solver.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::square(&self.bbox, self.mesh)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub grad_tol: f64,
    pub stop: StopReason,
    pub converged: bool,
    pub mu: f64,
    pub best_start: usize,
    pub start_seeds: Vec<Option<u64>>,
    pub start_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LdSolution {
    /// `∫ f(x, w, ∇w)` at the argmin, exact integrand.
    pub value: f64,
    pub per_volume: f64,
    pub argmin: GridDisplacement,
    pub diagnostics: Diagnostics,
}

/// Discrete energy on a grid with part of the nodes fixed.
pub struct LdProblem {
    grid: Grid,
    f: Arc<dyn Integrand>,
    map: Vec<usize>,
    base: Vec<f64>,
    nfree: usize,
    mu: f64,
    zero_mean: bool,
    gauss: [GaussPoint; 4],
}

impl LdProblem {
    /// Boundary nodes fixed to the data; interior nodes free.
    pub fn dirichlet(grid: Grid, data: &BoundaryData, f: Arc<dyn Integrand>, mu: f64) -> Self {
        let base = data.nodal(&grid);
        let mut map = vec![FIXED; grid.num_nodes()];
        let mut nfree = 0;
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                if !grid.is_boundary(i, j) {
                    map[grid.node(i, j)] = nfree;
                    nfree += 1;
                }
            }
        }
        let gauss = grid.gauss();
        LdProblem {
            grid,
            f,
            map,
            base,
            nfree,
            mu,
            zero_mean: false,
            gauss,
        }
    }

    /// `A x + φ` with `φ` periodic on the grid box and of zero mean.
    pub fn periodic(grid: Grid, a: Mat, f: Arc<dyn Integrand>, mu: f64) -> Self {
        let base = BoundaryData::affine(a).nodal(&grid);
        let mut map = vec![0; grid.num_nodes()];
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                map[grid.node(i, j)] = (i % grid.nx) + (j % grid.ny) * grid.nx;
            }
        }
        let gauss = grid.gauss();
        LdProblem {
            nfree: grid.nx * grid.ny,
            grid,
            f,
            map,
            base,
            mu,
            zero_mean: true,
            gauss,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn num_free(&self) -> usize {
        2 * self.nfree
    }

    pub fn nodal(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.base.clone();
        for (k, &m) in self.map.iter().enumerate() {
            if m != FIXED {
                out[2 * k] += z[2 * m];
                out[2 * k + 1] += z[2 * m + 1];
            }
        }
        out
    }

    /// Unknowns reproducing a nodal field (first occurrence wins for
    /// periodically identified nodes).
    pub fn free_from_nodal(&self, nodal: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; 2 * self.nfree];
        let mut seen = vec![false; self.nfree];
        for (k, &m) in self.map.iter().enumerate() {
            if m != FIXED && !seen[m] {
                seen[m] = true;
                z[2 * m] = nodal[2 * k] - self.base[2 * k];
                z[2 * m + 1] = nodal[2 * k + 1] - self.base[2 * k + 1];
            }
        }
        if self.zero_mean {
            project_mean(&mut z);
        }
        z
    }

    pub fn to_field(&self, z: &[f64]) -> GridDisplacement {
        GridDisplacement {
            grid: self.grid.clone(),
            values: self.nodal(z),
            mask: self.map.iter().map(|m| *m == FIXED).collect(),
        }
    }

    /// Exact energy.
    pub fn energy(&self, z: &[f64]) -> f64 {
        self.to_field(z).energy(self.f.as_ref())
    }

    /// Smoothed energy and gradient with respect to the unknowns.
    pub fn energy_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let nodal = self.nodal(z);
        let g = &self.grid;
        let mut gn = vec![0.0; nodal.len()];
        let mut total = 0.0;
        let mut dv = [0.0; 2];
        let mut da = Mat::zeros(2);
        for ey in 0..g.ny {
            for ex in 0..g.nx {
                let nodes = g.element_nodes(ex, ey);
                let vals = [
                    [nodal[2 * nodes[0]], nodal[2 * nodes[0] + 1]],
                    [nodal[2 * nodes[1]], nodal[2 * nodes[1] + 1]],
                    [nodal[2 * nodes[2]], nodal[2 * nodes[2] + 1]],
                    [nodal[2 * nodes[3]], nodal[2 * nodes[3] + 1]],
                ];
                for p in &self.gauss {
                    let (v, a) = interpolate(p, &vals);
                    let x = g.point(ex, ey, p.xi);
                    let e = self.f.eval_grad(&x, &v, &a, self.mu, &mut dv, &mut da);
                    total += p.weight * e;
                    for (loc, &k) in nodes.iter().enumerate() {
                        for c in 0..2 {
                            gn[2 * k + c] += p.weight
                                * (dv[c] * p.n[loc] + da[(c, 0)] * p.dx[loc] + da[(c, 1)] * p.dy[loc]);
                        }
                    }
                }
            }
        }
        grad.iter_mut().for_each(|x| *x = 0.0);
        for (k, &m) in self.map.iter().enumerate() {
            if m != FIXED {
                grad[2 * m] += gn[2 * k];
                grad[2 * m + 1] += gn[2 * k + 1];
            }
        }
        if self.zero_mean {
            project_mean(grad);
        }
        total
    }
}

/// Removes the componentwise mean of an interleaved two-component vector.
fn project_mean(z: &mut [f64]) {
    let n = z.len() / 2;
    if n == 0 {
        return;
    }
    for c in 0..2 {
        let m: f64 = (0..n).map(|k| z[2 * k + c]).sum::<f64>() / n as f64;
        (0..n).for_each(|k| z[2 * k + c] -= m);
    }
}

/// One minimization from a start; returns the better of start and end under
/// the exact energy.
pub(crate) fn descend(
    energy_grad: &(dyn Fn(&[f64], &mut [f64]) -> f64 + Sync),
    exact: &(dyn Fn(&[f64]) -> f64 + Sync),
    z0: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64, Diagnostics)> {
    let mut g0 = vec![0.0; z0.len()];
    let f0 = energy_grad(&z0, &mut g0);
    if !f0.is_finite() {
        return Err(Error::IntegrandOverflow("energy is not finite at the start".into()));
    }
    let g0n = g0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let grad_tol = opts.grad_tol * (g0n + 1.0);
    let lb = LbfgsOptions {
        max_iters: opts.max_iters,
        grad_tol,
        ..LbfgsOptions::default()
    };
    let exact_start = exact(&z0);
    let res = minimize(energy_grad, z0.clone(), &lb);
    if res.reason == StopReason::NonFinite {
        return Err(Error::IntegrandOverflow("energy became non-finite".into()));
    }
    let exact_end = exact(&res.x);
    if !exact_end.is_finite() {
        return Err(Error::IntegrandOverflow("energy is not finite at the argmin".into()));
    }
    let diag = Diagnostics {
        iterations: res.iters,
        evaluations: res.evals,
        grad_norm: res.grad_norm,
        grad_tol,
        stop: res.reason,
        converged: matches!(res.reason, StopReason::GradTol | StopReason::Stalled),
        mu: 0.0,
        best_start: 0,
        start_seeds: vec![],
        start_values: vec![],
    };
    if exact_start < exact_end {
        Ok((z0, exact_start, diag))
    } else {
        Ok((res.x, exact_end, diag))
    }
}

/// Start vectors: optional warm start, the noise-free start, then seeded noisy
/// copies of the noise-free start.
pub(crate) fn starts(
    z0: &[f64],
    warm: Option<Vec<f64>>,
    opts: &SolverOptions,
    sigma: f64,
) -> Vec<(Option<u64>, Vec<f64>)> {
    let mut out = Vec::new();
    if let Some(w) = warm {
        out.push((None, w));
    }
    out.push((None, z0.to_vec()));
    for k in 1..opts.multistarts {
        let seed = opts.seed.wrapping_add(k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        let z = z0.iter().map(|x| x + normal.sample(&mut rng)).collect();
        out.push((Some(seed), z));
    }
    out
}

/// Runs every start in parallel; the lowest value wins, ties to the earliest.
pub(crate) fn best_of<T: Send>(
    runs: Vec<(Option<u64>, Vec<f64>)>,
    run: impl Fn(Vec<f64>) -> Result<(T, f64, Diagnostics)> + Sync + Send,
) -> Result<(T, f64, Diagnostics)> {
    let seeds: Vec<Option<u64>> = runs.iter().map(|r| r.0).collect();
    let results: Vec<Result<(T, f64, Diagnostics)>> =
        runs.into_par_iter().map(|(_, z)| run(z)).collect();
    let mut best: Option<(usize, T, f64, Diagnostics)> = None;
    let mut values = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let (t, v, d) = r?;
        values.push(v);
        let better = match &best {
            None => true,
            Some((_, _, bv, _)) => v < *bv,
        };
        if better {
            best = Some((i, t, v, d));
        }
    }
    let (i, t, v, mut d) = best.ok_or_else(|| Error::Solver("no start was run".into()))?;
    d.best_start = i;
    d.start_seeds = seeds;
    d.start_values = values;
    Ok((t, v, d))
}

fn run_problem(
    problem: &LdProblem,
    z0: Vec<f64>,
    warm: Option<&GridDisplacement>,
    opts: &SolverOptions,
    scale: f64,
) -> Result<LdSolution> {
    let warm_z = match warm {
        Some(w) => {
            if w.grid != problem.grid {
                return Err(Error::GridMismatch("warm start lives on another grid".into()));
            }
            Some(problem.free_from_nodal(&w.values))
        }
        None => None,
    };
    let h = problem.grid.hx().min(problem.grid.hy());
    let mut list = starts(&z0, warm_z, opts, opts.noise * scale * h);
    if problem.zero_mean {
        for (_, z) in list.iter_mut() {
            project_mean(z);
        }
    }
    let eg = |z: &[f64], g: &mut [f64]| problem.energy_grad(z, g);
    let ex = |z: &[f64]| problem.energy(z);
    let (z, value, mut diag) = best_of(list, |z| descend(&eg, &ex, z, opts))?;
    diag.mu = problem.mu;
    let argmin = problem.to_field(&z);
    let vol = problem.grid.bbox().volume();
    Ok(LdSolution {
        value,
        per_volume: value / vol,
        argmin,
        diagnostics: diag,
    })
}

/// Dirichlet problem `inf { ∫ f(x, w, ∇w) : w = data on ∂box }`.
pub fn solve_ld(spec: &CellSpec, f: Arc<dyn Integrand>) -> Result<LdSolution> {
    solve_ld_warm(spec, f, None)
}

/// As [`solve_ld`], with an extra start taken from a field on the same grid.
pub fn solve_ld_warm(
    spec: &CellSpec,
    f: Arc<dyn Integrand>,
    warm: Option<&GridDisplacement>,
) -> Result<LdSolution> {
    spec.validate()?;
    let grid = spec.grid()?;
    let scale = spec.data.scale();
    let problem = LdProblem::dirichlet(grid, &spec.data, f, spec.solver.mu_rel * scale);
    let z0 = problem.free_from_nodal(&problem.base);
    run_problem(&problem, z0, warm, &spec.solver, scale)
}

/// `inf { ∫ f(x, A + ∇φ) : φ periodic on the box, zero mean }`.
pub fn solve_periodic(
    bbox: &Aabb,
    mesh: usize,
    a: Mat,
    f: Arc<dyn Integrand>,
    opts: &SolverOptions,
) -> Result<LdSolution> {
    opts.validate()?;
    if mesh < 4 {
        return Err(Error::BadSpec("meshPerAxis must be at least 4".into()));
    }
    let grid = Grid::square(bbox, mesh)?;
    let scale = if a.norm() > 0.0 { a.norm() } else { 1.0 };
    let problem = LdProblem::periodic(grid, a, f, opts.mu_rel * scale);
    let z0 = vec![0.0; problem.num_free()];
    run_problem(&problem, z0, None, opts, scale)
}

/// `∮_{∂box} |u₁ − u₂|` by two-point Gauss on `segments` pieces per face.
pub fn boundary_l1_gap(u1: &BoundaryData, u2: &BoundaryData, bbox: &Aabb, segments: usize) -> f64 {
    let (gx, gw) = crate::quadrature::gauss_legendre(2);
    let mut total = 0.0;
    for d in 0..2 {
        let t = 1 - d;
        for val in [bbox.lo[d], bbox.hi[d]] {
            let (a, b) = (bbox.lo[t], bbox.hi[t]);
            let h = (b - a) / segments as f64;
            for s in 0..segments {
                let mid = a + (s as f64 + 0.5) * h;
                for (x, w) in gx.iter().zip(&gw) {
                    let mut p = [0.0; 2];
                    p[d] = val;
                    p[t] = mid + 0.5 * h * x;
                    let (v1, v2) = (u1.eval(&p), u2.eval(&p));
                    total += 0.5 * h * w * ((v1[0] - v2[0]).powi(2) + (v1[1] - v2[1]).powi(2)).sqrt();
                }
            }
        }
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub m1: f64,
    pub m2: f64,
    pub difference: f64,
    pub boundary_gap: f64,
}

/// Both sides of the Lipschitz estimate `|𝔪(u₁) − 𝔪(u₂)| ≲ ∮ |u₁ − u₂|`.
pub fn m_continuity_check(
    u1: &BoundaryData,
    u2: &BoundaryData,
    spec: &CellSpec,
    f: Arc<dyn Integrand>,
) -> Result<ContinuityReport> {
    let s1 = CellSpec { data: u1.clone(), ..spec.clone() };
    let s2 = CellSpec { data: u2.clone(), ..spec.clone() };
    let m1 = solve_ld(&s1, f.clone())?.value;
    let m2 = solve_ld(&s2, f)?.value;
    Ok(ContinuityReport {
        m1,
        m2,
        difference: (m1 - m2).abs(),
        boundary_gap: boundary_l1_gap(u1, u2, &spec.bbox, 4 * spec.mesh),
    })
}
