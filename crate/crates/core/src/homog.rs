//! Periodic homogenization: growing-cell Dirichlet values, the periodic cell
//! formula for convex densities, and the folding construction.

use std::sync::Arc;

use serde::Serialize;

use crate::cellsolver::{
    solve_ld, solve_ld_warm, solve_periodic, BoundaryData, CellSpec, Grid, GridDisplacement,
    Integrand, LdSolution, SolverOptions,
};
use crate::density::{DensityEstimate, MONOTONE_TOL};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::tensor::Mat;

/// A periodic density with period cell `(0,1)²` and a target strain.
#[derive(Clone, Debug)]
pub struct HomogSpec {
    pub f0: Arc<dyn Integrand>,
    pub a: Mat,
    pub t_schedule: Vec<usize>,
    pub mesh_per_period: usize,
    pub solver: SolverOptions,
}

impl HomogSpec {
    pub fn new(f0: Arc<dyn Integrand>, a: Mat, t_schedule: Vec<usize>, mesh_per_period: usize) -> Self {
        HomogSpec {
            f0,
            a,
            t_schedule,
            mesh_per_period,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fl = self.f0.flags();
        if !(fl.x_periodic || fl.x_independent) {
            return Err(Error::Validation(format!("{} is not periodic in x", self.f0.name())));
        }
        if self.a.dim() != 2 || !self.a.is_symmetric(1e-12) {
            return Err(Error::Validation("the strain must be a symmetric 2×2 matrix".into()));
        }
        if self.mesh_per_period < 8 {
            return Err(Error::Validation("mesh per period must be at least 8".into()));
        }
        if self.t_schedule.is_empty()
            || self.t_schedule[0] == 0
            || self.t_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Validation("T-schedule must be increasing positive integers".into()));
        }
        self.solver.validate()
    }
}

/// `w(x − s) + A s` on each of the `k × k` translated copies of the cell of `w`.
pub fn tile(w: &GridDisplacement, k: usize, a: &Mat) -> GridDisplacement {
    let g = &w.grid;
    let (lx, ly) = (g.hi[0] - g.lo[0], g.hi[1] - g.lo[1]);
    let fine = Grid {
        lo: g.lo,
        hi: [g.lo[0] + k as f64 * lx, g.lo[1] + k as f64 * ly],
        nx: k * g.nx,
        ny: k * g.ny,
    };
    let mut values = vec![0.0; 2 * fine.num_nodes()];
    let mut mask = vec![false; fine.num_nodes()];
    for j in 0..=fine.ny {
        for i in 0..=fine.nx {
            let (bi, bj) = ((i / g.nx).min(k - 1), (j / g.ny).min(k - 1));
            let (li, lj) = (i - bi * g.nx, j - bj * g.ny);
            let s = [bi as f64 * lx, bj as f64 * ly];
            let base = w.node_value(g.node(li, lj));
            let as_ = a.mul_vec(&s);
            let n = fine.node(i, j);
            values[2 * n] = base[0] + as_[0];
            values[2 * n + 1] = base[1] + as_[1];
            mask[n] = fine.is_boundary(i, j);
        }
    }
    GridDisplacement { grid: fine, values, mask }
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogResult {
    pub estimate: DensityEstimate,
    pub solutions: Vec<LdSolution>,
}

/// `(1/T²) inf ∫_{(0,T)²} f₀(x, ∇w)` with `w = A x` on the boundary, per `T`.
///
/// When `T` is a multiple of the previous entry the tiled previous minimizer
/// is an extra start, so such values never increase. The extrapolated value
/// is linear in `1/T` through the last two entries.
pub fn fhom_dirichlet(spec: &HomogSpec) -> Result<DensityEstimate> {
    fhom_dirichlet_full(spec).map(|r| r.estimate)
}

pub fn fhom_dirichlet_full(spec: &HomogSpec) -> Result<HomogResult> {
    spec.validate()?;
    let mut samples = Vec::new();
    let mut solutions: Vec<LdSolution> = Vec::new();
    let mut prev_t = 0usize;
    for &t in &spec.t_schedule {
        let bbox = Aabb::new(vec![0.0, 0.0], vec![t as f64, t as f64])?;
        let cell = CellSpec::new(bbox, BoundaryData::affine(spec.a), t * spec.mesh_per_period)
            .with_solver(spec.solver.clone());
        let warm = solutions
            .last()
            .filter(|_| t % prev_t == 0)
            .map(|s| tile(&s.argmin, t / prev_t, &spec.a));
        let sol = solve_ld_warm(&cell, spec.f0.clone(), warm.as_ref()).map_err(|e| Error::AtScale {
            context: "homogenization cell",
            eps: t as f64,
            source: Box::new(e),
        })?;
        samples.push((t as f64, sol.per_volume));
        solutions.push(sol);
        prev_t = t;
    }
    let mut estimate = DensityEstimate::from_samples(samples, 1e-2)?;
    let n = estimate.samples.len();
    if n >= 2 {
        let (t1, v1) = estimate.samples[n - 2];
        let (t2, v2) = estimate.samples[n - 1];
        estimate.extrapolated = (t2 * v2 - t1 * v1) / (t2 - t1);
    }
    Ok(HomogResult { estimate, solutions })
}

/// `inf ∫_{(0,1)²} f₀(x, A + ∇w)` over periodic zero-mean `w`.
pub fn fhom_periodic(spec: &HomogSpec) -> Result<f64> {
    spec.validate()?;
    if !spec.f0.flags().convex {
        return Err(Error::PeriodicNeedsConvex);
    }
    let cell = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let sol = solve_periodic(&cell, spec.mesh_per_period, spec.a, spec.f0.clone(), &spec.solver)?;
    Ok(sol.per_volume)
}

/// Dirichlet minimizer on `(0,1)²` with datum `(1/ε) u_{v,e₁}(· − e)`,
/// `e = (½, ½)`: a field whose traces satisfy the folding hypotheses.
pub fn fold_competitor(
    f: Arc<dyn Integrand>,
    eps: f64,
    v: &[f64],
    mesh: usize,
    opts: &SolverOptions,
) -> Result<GridDisplacement> {
    if !(eps > 0.0) {
        return Err(Error::Validation("epsilon must be positive".into()));
    }
    let data = BoundaryData::Jump {
        vminus: vec![0.0, 0.0],
        vplus: vec![v[0] / eps, v[1] / eps],
        nu: vec![1.0, 0.0],
        center: vec![0.5, 0.5],
    };
    let bbox = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let spec = CellSpec::new(bbox, data, mesh).with_solver(opts.clone());
    Ok(solve_ld(&spec, f)?.argmin)
}

/// `w_j(x) = (1/j)(w(jx − ⌊jx⌋) + (1/ε)⌊jx₁⌋ v)` on a mesh of `out_res` per axis.
///
/// `w` must live on `(0,1)²` with `out_res / j` cells per axis and satisfy
/// `w(1, y) − w(0, y) = v/ε`, `w(x, 1) = w(x, 0)` at the nodes, so that `w_j`
/// is continuous.
pub fn fold(w: &GridDisplacement, j: usize, eps: f64, v: &[f64], out_res: usize) -> Result<GridDisplacement> {
    let g = &w.grid;
    if j == 0 || out_res % j != 0 || out_res / j != g.nx || g.nx != g.ny {
        return Err(Error::GridMismatch(format!(
            "resolution {out_res} with j = {j} needs a {}-cell input, got {}×{}",
            out_res / j.max(1),
            g.nx,
            g.ny
        )));
    }
    if g.lo != [0.0, 0.0] || g.hi != [1.0, 1.0] {
        return Err(Error::Validation("folding takes a field on (0,1)²".into()));
    }
    if !(eps > 0.0) || v.len() != 2 {
        return Err(Error::Validation("folding needs ε > 0 and a planar v".into()));
    }
    let jump = [v[0] / eps, v[1] / eps];
    let scale = w.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    let n = g.nx;
    for k in 0..=n {
        let (l, r) = (w.node_value(g.node(0, k)), w.node_value(g.node(n, k)));
        let (b, t) = (w.node_value(g.node(k, 0)), w.node_value(g.node(k, n)));
        if (r[0] - l[0] - jump[0]).abs() > tol
            || (r[1] - l[1] - jump[1]).abs() > tol
            || (t[0] - b[0]).abs() > tol
            || (t[1] - b[1]).abs() > tol
        {
            return Err(Error::HypothesisViolated("traces do not match the folding convention".into()));
        }
    }
    let out = Grid::square(&Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?, out_res)?;
    let jf = j as f64;
    let mut values = vec![0.0; 2 * out.num_nodes()];
    for jy in 0..=out_res {
        for ix in 0..=out_res {
            // Node (ix, jy) sits in period cell (ix / n, jy / n); the right and
            // top edges belong to the last cell.
            let (cx, cy) = ((ix / n).min(j - 1), (jy / n).min(j - 1));
            let (lx, ly) = (ix - cx * n, jy - cy * n);
            let wv = w.node_value(g.node(lx, ly));
            let k = out.node(ix, jy);
            values[2 * k] = (wv[0] + cx as f64 * jump[0]) / jf;
            values[2 * k + 1] = (wv[1] + cx as f64 * jump[1]) / jf;
        }
    }
    let mask = (0..=out_res)
        .flat_map(|jy| (0..=out_res).map(move |ix| (ix, jy)))
        .map(|(ix, jy)| out.is_boundary(ix, jy))
        .collect();
    GridDisplacement::new(out, values, mask)
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldReport {
    pub j: usize,
    pub energy_w: f64,
    pub energy_wj: f64,
    pub emass_w: f64,
    pub emass_wj: f64,
}

/// Both sides of the folding identity for an `x`-independent bulk density.
pub fn fold_identity(
    f: &dyn Integrand,
    w: &GridDisplacement,
    j: usize,
    eps: f64,
    v: &[f64],
    out_res: usize,
) -> Result<FoldReport> {
    if !f.flags().x_independent {
        return Err(Error::Validation("the folding identity needs an x-independent density".into()));
    }
    let wj = fold(w, j, eps, v, out_res)?;
    Ok(FoldReport {
        j,
        energy_w: w.energy(f),
        energy_wj: wj.energy(f),
        emass_w: w.emass(),
        emass_wj: wj.emass(),
    })
}

/// True when no value along a dyadic chain increases beyond noise.
pub fn dyadic_monotone(e: &DensityEstimate) -> bool {
    e.samples.windows(2).all(|w| {
        let (t1, t2) = (w[0].0 as usize, w[1].0 as usize);
        t2 % t1 != 0 || w[1].1 <= w[0].1 + MONOTONE_TOL
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsolver::integrand::AbsSym;

    #[test]
    fn tile_matches_affine_data() {
        let g = Grid::square(&Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 4).unwrap();
        let a = Mat::new2(1.0, 0.5, 0.5, -2.0);
        let w = GridDisplacement::interpolant(g, &BoundaryData::affine(a));
        let t = tile(&w, 3, &a);
        let exact = GridDisplacement::interpolant(t.grid.clone(), &BoundaryData::affine(a));
        assert!(t.max_abs_diff(&exact) < 1e-14);
        assert_eq!(t.mask, exact.mask);
    }

    #[test]
    fn fold_rejects_misaligned() {
        let g = Grid::square(&Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 8).unwrap();
        let w = GridDisplacement::interpolant(g, &BoundaryData::affine(Mat::zeros(2)));
        assert!(matches!(fold(&w, 3, 1.0, &[0.0, 0.0], 32), Err(Error::GridMismatch(_))));
        assert!(matches!(fold(&w, 2, 1.0, &[0.0, 0.0], 32), Err(Error::GridMismatch(_))));
        assert!(matches!(fold(&w, 2, 1.0, &[1.0, 0.0], 16), Err(Error::HypothesisViolated(_))));
        let w1 = fold(&w, 1, 1.0, &[0.0, 0.0], 8).unwrap();
        assert_eq!(w1.values, w.values);
    }

    #[test]
    fn periodic_requires_convexity() {
        let spec = HomogSpec::new(Arc::new(crate::cellsolver::integrand::NegQuadraticTrunc), Mat::zeros(2), vec![1], 8);
        assert!(fhom_periodic(&spec).is_err());
        let spec = HomogSpec::new(Arc::new(AbsSym), Mat::zeros(2), vec![2, 1], 8);
        assert!(spec.validate().is_err());
    }
}
