//! Uniform quadrilateral meshes, bilinear nodal fields and boundary data.

use serde::Serialize;

use crate::bdmodel::StructuredBD;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::tensor::{vdot, Mat};

use super::integrand::Integrand;

/// Uniform `nx × ny` mesh of a rectangle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

/// Shape functions at one Gauss point of the reference element.
#[derive(Clone, Copy, Debug)]
pub struct GaussPoint {
    pub xi: [f64; 2],
    pub n: [f64; 4],
    pub dx: [f64; 4],
    pub dy: [f64; 4],
    pub weight: f64,
}

impl Grid {
    pub fn new(b: &Aabb, nx: usize, ny: usize) -> Result<Self> {
        if b.dim() != 2 {
            return Err(Error::Unsupported("cell solvers run in two dimensions".into()));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::BadSpec("empty mesh".into()));
        }
        Ok(Grid {
            lo: [b.lo[0], b.lo[1]],
            hi: [b.hi[0], b.hi[1]],
            nx,
            ny,
        })
    }

    pub fn square(b: &Aabb, n: usize) -> Result<Self> {
        Grid::new(b, n, n)
    }

    pub fn bbox(&self) -> Aabb {
        Aabb {
            lo: self.lo.to_vec(),
            hi: self.hi.to_vec(),
        }
    }

    pub fn hx(&self) -> f64 {
        (self.hi[0] - self.lo[0]) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.hi[1] - self.lo[1]) / self.ny as f64
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i + j * (self.nx + 1)
    }

    /// Node coordinates; the last node of each axis lands exactly on `hi`.
    #[inline]
    pub fn node_pos(&self, i: usize, j: usize) -> [f64; 2] {
        let x = if i == self.nx {
            self.hi[0]
        } else {
            self.lo[0] + (self.hi[0] - self.lo[0]) * i as f64 / self.nx as f64
        };
        let y = if j == self.ny {
            self.hi[1]
        } else {
            self.lo[1] + (self.hi[1] - self.lo[1]) * j as f64 / self.ny as f64
        };
        [x, y]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Node indices of element `(ex, ey)` in the order (0,0), (1,0), (0,1), (1,1).
    #[inline]
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        let a = self.node(ex, ey);
        [a, a + 1, a + self.nx + 1, a + self.nx + 2]
    }

    /// 2×2 Gauss rule for this mesh spacing.
    pub fn gauss(&self) -> [GaussPoint; 4] {
        let (hx, hy) = (self.hx(), self.hy());
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let mut out = [GaussPoint {
            xi: [0.0; 2],
            n: [0.0; 4],
            dx: [0.0; 4],
            dy: [0.0; 4],
            weight: 0.25 * hx * hy,
        }; 4];
        for (q, p) in out.iter_mut().enumerate() {
            let (s, t) = (g[q % 2], g[q / 2]);
            p.xi = [s, t];
            p.n = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
            p.dx = [-(1.0 - t) / hx, (1.0 - t) / hx, -t / hx, t / hx];
            p.dy = [-(1.0 - s) / hy, -s / hy, (1.0 - s) / hy, s / hy];
        }
        out
    }

    #[inline]
    pub fn point(&self, ex: usize, ey: usize, xi: [f64; 2]) -> [f64; 2] {
        [
            self.lo[0] + (ex as f64 + xi[0]) * self.hx(),
            self.lo[1] + (ey as f64 + xi[1]) * self.hy(),
        ]
    }

    /// Refinement by an integer factor.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            lo: self.lo,
            hi: self.hi,
            nx: self.nx * factor,
            ny: self.ny * factor,
        }
    }
}

/// Value and gradient of a bilinear element field at a Gauss point.
#[inline]
pub fn interpolate(p: &GaussPoint, vals: &[[f64; 2]; 4]) -> ([f64; 2], Mat) {
    let mut v = [0.0; 2];
    let mut g = Mat::zeros(2);
    for a in 0..4 {
        for c in 0..2 {
            v[c] += p.n[a] * vals[a][c];
            g[(c, 0)] += p.dx[a] * vals[a][c];
            g[(c, 1)] += p.dy[a] * vals[a][c];
        }
    }
    (v, g)
}

/// Dirichlet data on the boundary of a cell.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundaryData {
    /// `A y + v0`.
    Affine { a: Mat, v0: Vec<f64> },
    /// `v⁺` where `(y − center)·ν ≥ 0`, `v⁻` elsewhere.
    Jump {
        vminus: Vec<f64>,
        vplus: Vec<f64>,
        nu: Vec<f64>,
        center: Vec<f64>,
    },
    /// Trace of a synthetic field.
    Field(StructuredBD),
}

impl BoundaryData {
    pub fn affine(a: Mat) -> Self {
        BoundaryData::Affine {
            a,
            v0: vec![0.0; a.dim()],
        }
    }

    pub fn jump(vminus: &[f64], vplus: &[f64], nu: &[f64]) -> Self {
        BoundaryData::Jump {
            vminus: vminus.to_vec(),
            vplus: vplus.to_vec(),
            nu: nu.to_vec(),
            center: vec![0.0; nu.len()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryData::Affine { a, v0 } => {
                if a.dim() != 2 || v0.len() != 2 || !a.is_finite() {
                    return Err(Error::BadSpec("affine data must be a finite 2×2 map".into()));
                }
            }
            BoundaryData::Jump { vminus, vplus, nu, center } => {
                if [vminus.len(), vplus.len(), nu.len(), center.len()] != [2; 4] {
                    return Err(Error::BadSpec("jump data must be two-dimensional".into()));
                }
                if (vdot(nu, nu).sqrt() - 1.0).abs() > 1e-12 {
                    return Err(Error::BadSpec("jump normal must be a unit vector".into()));
                }
            }
            BoundaryData::Field(u) => {
                if u.dim() != 2 {
                    return Err(Error::BadSpec("field data must be two-dimensional".into()));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> [f64; 2] {
        match self {
            BoundaryData::Affine { a, v0 } => {
                let ay = a.mul_vec(y);
                [ay[0] + v0[0], ay[1] + v0[1]]
            }
            BoundaryData::Jump { vminus, vplus, nu, center } => {
                let s = (y[0] - center[0]) * nu[0] + (y[1] - center[1]) * nu[1];
                let v = if s >= 0.0 { vplus } else { vminus };
                [v[0], v[1]]
            }
            BoundaryData::Field(u) => {
                let v = u.eval(y);
                [v[0], v[1]]
            }
        }
    }

    /// Value at `y` as seen from the point `toward` (one-sided at discontinuities).
    pub fn eval_from(&self, y: &[f64], toward: &[f64]) -> [f64; 2] {
        match self {
            BoundaryData::Jump { vminus, vplus, nu, center } => {
                let s = (toward[0] - center[0]) * nu[0] + (toward[1] - center[1]) * nu[1];
                let v = if s >= 0.0 { vplus } else { vminus };
                [v[0], v[1]]
            }
            BoundaryData::Field(_) => {
                let p = [y[0] + 1e-9 * (toward[0] - y[0]), y[1] + 1e-9 * (toward[1] - y[1])];
                self.eval(&p)
            }
            _ => self.eval(y),
        }
    }

    /// Magnitude used to scale smoothing and start noise.
    pub fn scale(&self) -> f64 {
        let s = match self {
            BoundaryData::Affine { a, .. } => a.norm(),
            BoundaryData::Jump { vminus, vplus, .. } => {
                let d: Vec<f64> = vplus.iter().zip(vminus).map(|(a, b)| a - b).collect();
                vdot(&d, &d).sqrt()
            }
            BoundaryData::Field(u) => {
                let b = Aabb::unit_centered(2);
                u.total_variation(&b).unwrap_or(1.0)
            }
        };
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    }

    /// Data at the grid nodes.
    pub fn nodal(&self, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; 2 * grid.num_nodes()];
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let v = self.eval(&grid.node_pos(i, j));
                let k = grid.node(i, j);
                out[2 * k] = v[0];
                out[2 * k + 1] = v[1];
            }
        }
        out
    }
}

/// Continuous bilinear field on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct GridDisplacement {
    pub grid: Grid,
    /// Interleaved `(u₁, u₂)` per node.
    pub values: Vec<f64>,
    /// True at nodes fixed by boundary data.
    pub mask: Vec<bool>,
}

impl GridDisplacement {
    pub fn new(grid: Grid, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != 2 * grid.num_nodes() || mask.len() != grid.num_nodes() {
            return Err(Error::BadSpec("nodal arrays do not match the grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrandOverflow("non-finite nodal value".into()));
        }
        Ok(GridDisplacement { grid, values, mask })
    }

    /// Nodal interpolant of boundary data with the boundary masked.
    pub fn interpolant(grid: Grid, data: &BoundaryData) -> Self {
        let values = data.nodal(&grid);
        let mask = (0..=grid.ny)
            .flat_map(|j| (0..=grid.nx).map(move |i| (i, j)))
            .map(|(i, j)| grid.is_boundary(i, j))
            .collect();
        GridDisplacement { grid, values, mask }
    }

    #[inline]
    pub fn node_value(&self, k: usize) -> [f64; 2] {
        [self.values[2 * k], self.values[2 * k + 1]]
    }

    pub fn element_values(&self, ex: usize, ey: usize) -> [[f64; 2]; 4] {
        let nodes = self.grid.element_nodes(ex, ey);
        [
            self.node_value(nodes[0]),
            self.node_value(nodes[1]),
            self.node_value(nodes[2]),
            self.node_value(nodes[3]),
        ]
    }

    /// Bilinear interpolation; points outside are clamped to the box.
    pub fn eval(&self, x: &[f64]) -> [f64; 2] {
        let g = &self.grid;
        let s = ((x[0] - g.lo[0]) / g.hx()).clamp(0.0, g.nx as f64);
        let t = ((x[1] - g.lo[1]) / g.hy()).clamp(0.0, g.ny as f64);
        let ex = (s.floor() as usize).min(g.nx - 1);
        let ey = (t.floor() as usize).min(g.ny - 1);
        let (a, b) = (s - ex as f64, t - ey as f64);
        let v = self.element_values(ex, ey);
        let w = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
        let mut out = [0.0; 2];
        for k in 0..4 {
            out[0] += w[k] * v[k][0];
            out[1] += w[k] * v[k][1];
        }
        out
    }

    /// Sum over elements and Gauss points of `h(x, w, ∇w) · weight`.
    pub fn integrate(&self, mut h: impl FnMut(&[f64; 2], &[f64; 2], &Mat) -> f64) -> f64 {
        let g = &self.grid;
        let gp = g.gauss();
        let mut total = 0.0;
        for ey in 0..g.ny {
            for ex in 0..g.nx {
                let vals = self.element_values(ex, ey);
                for p in &gp {
                    let (v, grad) = interpolate(p, &vals);
                    total += p.weight * h(&g.point(ex, ey, p.xi), &v, &grad);
                }
            }
        }
        total
    }

    /// `∫ f(x, w, ∇w)` by 2×2 Gauss.
    pub fn energy(&self, f: &dyn Integrand) -> f64 {
        self.integrate(|x, v, a| f.eval(x, v, a))
    }

    /// `|Ew|` of the whole box by 2×2 Gauss.
    pub fn emass(&self) -> f64 {
        self.integrate(|_, _, a| a.sym().norm())
    }

    /// `b_K` with `K` the grid box.
    pub fn mean(&self) -> [f64; 2] {
        let vol = self.grid.bbox().volume();
        let m0 = self.integrate(|_, v, _| v[0]);
        let m1 = self.integrate(|_, v, _| v[1]);
        [m0 / vol, m1 / vol]
    }

    /// `∫ ∇w` over the grid box.
    pub fn grad_integral(&self) -> Mat {
        let mut out = Mat::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] = self.integrate(|_, _, a| a[(i, j)]);
            }
        }
        out
    }

    /// `M_K` with `K` the grid box.
    pub fn m_k(&self) -> Mat {
        let d = self.grad_integral();
        (d - d.transpose()) * (0.5 / self.grid.bbox().volume())
    }

    /// Rigid projection onto the grid box, `(L, v)` with `ℜ(y) = L (y − x_K) + b_K`.
    pub fn rigid_projection(&self) -> (Mat, [f64; 2]) {
        let l = self.m_k();
        let b = self.mean();
        let c = self.grid.bbox().center();
        let lc = l.mul_vec(&c);
        (l, [b[0] - lc[0], b[1] - lc[1]])
    }

    /// Copy on a grid refined by `factor`, by bilinear interpolation (exact).
    pub fn prolongate(&self, factor: usize) -> GridDisplacement {
        let fine = self.grid.refined(factor);
        let mut values = vec![0.0; 2 * fine.num_nodes()];
        let mut mask = vec![false; fine.num_nodes()];
        for j in 0..=fine.ny {
            for i in 0..=fine.nx {
                let k = fine.node(i, j);
                let v = self.eval(&fine.node_pos(i, j));
                values[2 * k] = v[0];
                values[2 * k + 1] = v[1];
                mask[k] = fine.is_boundary(i, j);
            }
        }
        GridDisplacement { grid: fine, values, mask }
    }

    pub fn max_abs_diff(&self, other: &GridDisplacement) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsolver::integrand::AbsSym;

    #[test]
    fn affine_fields_are_reproduced() {
        let g = Grid::square(&Aabb::unit_centered(2), 4).unwrap();
        let a = Mat::new2(1.0, 2.0, -0.5, 0.25);
        let w = GridDisplacement::interpolant(g, &BoundaryData::Affine { a, v0: vec![0.1, 0.2] });
        let gi = w.grad_integral();
        assert!((gi - a).max_abs() < 1e-14);
        assert!((w.energy(&AbsSym) - a.sym().norm()).abs() < 1e-14);
        let m = w.mean();
        assert!((m[0] - 0.1).abs() < 1e-15 && (m[1] - 0.2).abs() < 1e-15);
        assert!((w.m_k() - a.skew()).max_abs() < 1e-14);
        let p = w.prolongate(2);
        let v = p.eval(&[0.3, -0.1]);
        let e = a.mul_vec(&[0.3, -0.1]);
        assert!((v[0] - e[0] - 0.1).abs() < 1e-14 && (v[1] - e[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn jump_data_assigns_plus_on_the_plane() {
        let g = Grid::square(&Aabb::unit_centered(2), 4).unwrap();
        let d = BoundaryData::jump(&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]);
        let w = GridDisplacement::interpolant(g.clone(), &d);
        assert_eq!(w.node_value(g.node(2, 0)), [0.0, 1.0]);
        assert_eq!(w.node_value(g.node(1, 0)), [0.0, 0.0]);
    }
}
