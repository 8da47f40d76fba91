//! Broken solver: bilinear fields per element with facet jump energies.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Mat;

use super::grid::{interpolate, BoundaryData, GaussPoint, Grid};
use super::integrand::{Integrand, SurfaceIntegrand};
use super::ld::{best_of, descend, starts, CellSpec, Diagnostics};

/// Element-wise bilinear field; nodes are duplicated across facets.
#[derive(Clone, Debug, Serialize)]
pub struct SbdField {
    pub grid: Grid,
    /// `values[8 e + 2 a + c]`: component `c` at local node `a` of element `e`.
    pub values: Vec<f64>,
}

/// One facet: the traces at its midpoint on both sides.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Facet {
    pub midpoint: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
    pub minus: [f64; 2],
    pub plus: [f64; 2],
    pub boundary: bool,
}

#[derive(Clone, Copy)]
enum Side {
    /// Element index and its two local nodes on the facet.
    Elem(usize, [usize; 2]),
    Datum,
}

#[derive(Clone, Copy)]
struct FacetTopo {
    minus: Side,
    plus: Side,
    mid: [f64; 2],
    normal: [f64; 2],
    length: f64,
}

fn facets(grid: &Grid) -> Vec<FacetTopo> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let e = |ex: usize, ey: usize| ex + ey * nx;
    let mut out = Vec::new();
    // Facets normal to e₁, at x = lo + i hx.
    for ey in 0..ny {
        for i in 0..=nx {
            let mid = [grid.node_pos(i, 0)[0], grid.lo[1] + (ey as f64 + 0.5) * hy];
            let minus = if i == 0 { Side::Datum } else { Side::Elem(e(i - 1, ey), [1, 3]) };
            let plus = if i == nx { Side::Datum } else { Side::Elem(e(i, ey), [0, 2]) };
            out.push(FacetTopo { minus, plus, mid, normal: [1.0, 0.0], length: hy });
        }
    }
    // Facets normal to e₂.
    for j in 0..=ny {
        for ex in 0..nx {
            let mid = [grid.lo[0] + (ex as f64 + 0.5) * hx, grid.node_pos(0, j)[1]];
            let minus = if j == 0 { Side::Datum } else { Side::Elem(e(ex, j - 1), [2, 3]) };
            let plus = if j == ny { Side::Datum } else { Side::Elem(e(ex, j), [0, 1]) };
            out.push(FacetTopo { minus, plus, mid, normal: [0.0, 1.0], length: hx });
        }
    }
    out
}

fn trace(values: &[f64], side: Side, datum: [f64; 2]) -> [f64; 2] {
    match side {
        Side::Datum => datum,
        Side::Elem(e, [a, b]) => [
            0.5 * (values[8 * e + 2 * a] + values[8 * e + 2 * b]),
            0.5 * (values[8 * e + 2 * a + 1] + values[8 * e + 2 * b + 1]),
        ],
    }
}

impl SbdField {
    fn element_values(&self, e: usize) -> [[f64; 2]; 4] {
        let v = &self.values[8 * e..8 * e + 8];
        [[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]]
    }

    pub fn bulk_energy(&self, f: &dyn Integrand) -> f64 {
        self.integrate(|x, v, a| f.eval(x, v, a))
    }

    fn integrate(&self, mut h: impl FnMut(&[f64; 2], &[f64; 2], &Mat) -> f64) -> f64 {
        let g = &self.grid;
        let gp = g.gauss();
        let mut total = 0.0;
        for ey in 0..g.ny {
            for ex in 0..g.nx {
                let vals = self.element_values(ex + ey * g.nx);
                for p in &gp {
                    let (v, a) = interpolate(p, &vals);
                    total += p.weight * h(&g.point(ex, ey, p.xi), &v, &a);
                }
            }
        }
        total
    }

    /// Every facet with its midpoint traces; boundary facets use the datum.
    pub fn facets(&self, data: &BoundaryData) -> Vec<Facet> {
        facets(&self.grid)
            .into_iter()
            .map(|t| {
                let d = data.eval(&t.mid);
                Facet {
                    midpoint: t.mid,
                    normal: t.normal,
                    length: t.length,
                    minus: trace(&self.values, t.minus, d),
                    plus: trace(&self.values, t.plus, d),
                    boundary: matches!(t.minus, Side::Datum) || matches!(t.plus, Side::Datum),
                }
            })
            .collect()
    }

    pub fn surface_energy(&self, g: &dyn SurfaceIntegrand, data: &BoundaryData) -> f64 {
        self.facets(data)
            .iter()
            .map(|f| f.length * g.eval(&f.midpoint, &f.minus, &f.plus, &f.normal))
            .sum()
    }

    /// `|Ew|` of the open box: bulk part plus interior facet jumps.
    pub fn emass(&self, data: &BoundaryData) -> f64 {
        let bulk = self.integrate(|_, _, a| a.sym().norm());
        let jumps: f64 = self
            .facets(data)
            .iter()
            .filter(|f| !f.boundary)
            .map(|f| {
                let d = [f.plus[0] - f.minus[0], f.plus[1] - f.minus[1]];
                f.length * crate::tensor::odot(&d, &f.normal).norm()
            })
            .sum();
        bulk + jumps
    }
}

struct SbdProblem<'a> {
    grid: Grid,
    f1: Arc<dyn Integrand>,
    g1: Arc<dyn SurfaceIntegrand>,
    data: &'a BoundaryData,
    topo: Vec<FacetTopo>,
    datum: Vec<[f64; 2]>,
    gauss: [GaussPoint; 4],
    mu: f64,
}

impl SbdProblem<'_> {
    fn field(&self, z: &[f64]) -> SbdField {
        SbdField {
            grid: self.grid.clone(),
            values: z.to_vec(),
        }
    }

    fn exact(&self, z: &[f64]) -> f64 {
        let f = self.field(z);
        f.bulk_energy(self.f1.as_ref()) + f.surface_energy(self.g1.as_ref(), self.data)
    }

    fn energy_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|x| *x = 0.0);
        let g = &self.grid;
        let mut total = 0.0;
        let mut dv = [0.0; 2];
        let mut da = Mat::zeros(2);
        for ey in 0..g.ny {
            for ex in 0..g.nx {
                let e = ex + ey * g.nx;
                let v = &z[8 * e..8 * e + 8];
                let vals = [[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]];
                for p in &self.gauss {
                    let (w, a) = interpolate(p, &vals);
                    let x = g.point(ex, ey, p.xi);
                    total += p.weight * self.f1.eval_grad(&x, &w, &a, self.mu, &mut dv, &mut da);
                    for loc in 0..4 {
                        for c in 0..2 {
                            grad[8 * e + 2 * loc + c] += p.weight
                                * (dv[c] * p.n[loc] + da[(c, 0)] * p.dx[loc] + da[(c, 1)] * p.dy[loc]);
                        }
                    }
                }
            }
        }
        let mut dm = [0.0; 2];
        let mut dp = [0.0; 2];
        for (t, d) in self.topo.iter().zip(&self.datum) {
            let vm = trace(z, t.minus, *d);
            let vp = trace(z, t.plus, *d);
            total += t.length * self.g1.eval_grad(&t.mid, &vm, &vp, &t.normal, self.mu, &mut dm, &mut dp);
            for (side, dd) in [(t.minus, dm), (t.plus, dp)] {
                if let Side::Elem(e, [a, b]) = side {
                    for c in 0..2 {
                        let s = 0.5 * t.length * dd[c];
                        grad[8 * e + 2 * a + c] += s;
                        grad[8 * e + 2 * b + c] += s;
                    }
                }
            }
        }
        total
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SbdSolution {
    pub value: f64,
    pub per_volume: f64,
    pub bulk: f64,
    pub surface: f64,
    pub argmin: SbdField,
    pub diagnostics: Diagnostics,
}

/// Bulk plus facet energy minimized over broken bilinear fields; the boundary
/// datum enters through the boundary facets.
pub fn solve_sbd(
    spec: &CellSpec,
    f1: Arc<dyn Integrand>,
    g1: Arc<dyn SurfaceIntegrand>,
) -> Result<SbdSolution> {
    spec.validate()?;
    let grid = spec.grid()?;
    let topo = facets(&grid);
    let datum = topo.iter().map(|t| spec.data.eval(&t.mid)).collect();
    let scale = spec.data.scale();
    let problem = SbdProblem {
        gauss: grid.gauss(),
        grid: grid.clone(),
        f1: f1.clone(),
        g1: g1.clone(),
        data: &spec.data,
        topo,
        datum,
        mu: spec.solver.mu_rel * scale,
    };
    // Start: data sampled from each element's own side of any discontinuity.
    let mut z0 = vec![0.0; 8 * grid.num_elements()];
    for ey in 0..grid.ny {
        for ex in 0..grid.nx {
            let e = ex + ey * grid.nx;
            let c = grid.point(ex, ey, [0.5, 0.5]);
            for (loc, (di, dj)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                let p = grid.node_pos(ex + di, ey + dj);
                let v = spec.data.eval_from(&p, &c);
                z0[8 * e + 2 * loc] = v[0];
                z0[8 * e + 2 * loc + 1] = v[1];
            }
        }
    }
    let h = grid.hx().min(grid.hy());
    let list = starts(&z0, None, &spec.solver, spec.solver.noise * scale * h);
    let eg = |z: &[f64], g: &mut [f64]| problem.energy_grad(z, g);
    let ex = |z: &[f64]| problem.exact(z);
    let (z, value, mut diag) = best_of(list, |z| descend(&eg, &ex, z, &spec.solver))?;
    diag.mu = problem.mu;
    let field = problem.field(&z);
    let bulk = field.bulk_energy(f1.as_ref());
    let surface = field.surface_energy(g1.as_ref(), &spec.data);
    if !(bulk.is_finite() && surface.is_finite()) {
        return Err(Error::IntegrandOverflow("non-finite SBD energy".into()));
    }
    Ok(SbdSolution {
        value,
        per_volume: value / spec.bbox.volume(),
        bulk,
        surface,
        argmin: field,
        diagnostics: diag,
    })
}
