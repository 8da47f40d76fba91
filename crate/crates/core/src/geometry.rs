//! Axis-aligned boxes and their intersections with hyperplanes and half-spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open axis-aligned box `∏ (lo_d, hi_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Tolerance used to decide that a plane coincides with a box face.
pub const FACE_TOL: f64 = 1e-12;

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Validation("box corners of different length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite())) {
            return Err(Error::Validation("non-finite box corner".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| b <= a) {
            return Err(Error::EmptyBox);
        }
        Ok(Aabb { lo, hi })
    }

    /// The cube `(-½, ½)ⁿ`.
    pub fn unit_centered(n: usize) -> Self {
        Aabb {
            lo: vec![-0.5; n],
            hi: vec![0.5; n],
        }
    }

    pub fn cube(center: &[f64], side: f64) -> Result<Self> {
        Aabb::new(
            center.iter().map(|c| c - 0.5 * side).collect(),
            center.iter().map(|c| c + 0.5 * side).collect(),
        )
    }

    /// `x + εK`.
    pub fn scaled_about(&self, x: &[f64], eps: f64) -> Result<Self> {
        Aabb::new(
            self.lo.iter().zip(x).map(|(l, c)| c + eps * l).collect(),
            self.hi.iter().zip(x).map(|(h, c)| c + eps * h).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(d, &v)| v >= self.lo[d] && v <= self.hi[d])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|d| other.lo[d] >= self.lo[d] && other.hi[d] <= self.hi[d])
    }

    /// `(d, index)` of a vector proportional to a coordinate axis.
    pub fn axis_of(normal: &[f64]) -> Option<(usize, f64)> {
        let mut found = None;
        for (d, &c) in normal.iter().enumerate() {
            if c != 0.0 {
                if found.is_some() {
                    return None;
                }
                found = Some((d, c.signum()));
            }
        }
        found
    }

    /// `Hⁿ⁻¹({x·ν = c} ∩ box)` for a unit normal `ν`.
    ///
    /// Fails when the plane contains a face of the box, since then the measure
    /// of the open and closed box differ.
    pub fn plane_section(&self, normal: &[f64], offset: f64) -> Result<f64> {
        let n = self.dim();
        if let Some((k, s)) = Aabb::axis_of(normal) {
            let t = offset * s;
            let scale = 1.0 + self.lo[k].abs().max(self.hi[k].abs());
            if (t - self.lo[k]).abs() <= FACE_TOL * scale
                || (t - self.hi[k]).abs() <= FACE_TOL * scale
            {
                return Err(Error::BoundaryChargedBox(format!(
                    "plane x[{k}] = {t} lies on a face"
                )));
            }
            if t > self.lo[k] && t < self.hi[k] {
                return Ok((0..n).filter(|&d| d != k).map(|d| self.width(d)).product());
            }
            return Ok(0.0);
        }
        if n != 2 {
            return Err(Error::Unsupported(
                "oblique planes are supported in two dimensions only".into(),
            ));
        }
        // Clip the line x·ν = c against the rectangle.
        let (nx, ny) = (normal[0], normal[1]);
        let p0 = [nx * offset, ny * offset];
        let dir = [-ny, nx];
        let mut tmin = f64::NEG_INFINITY;
        let mut tmax = f64::INFINITY;
        for d in 0..2 {
            let (a, b) = ((self.lo[d] - p0[d]) / dir[d], (self.hi[d] - p0[d]) / dir[d]);
            tmin = tmin.max(a.min(b));
            tmax = tmax.min(a.max(b));
        }
        Ok((tmax - tmin).max(0.0))
    }

    /// Volume of `{x·ν ≥ c} ∩ box` divided by the box volume.
    pub fn halfspace_fraction(&self, normal: &[f64], offset: f64) -> Result<f64> {
        let n = self.dim();
        if let Some((k, s)) = Aabb::axis_of(normal) {
            let w = self.width(k);
            // x·ν ≥ c with ν = -e_k reads x_k ≤ -c.
            let frac = if s > 0.0 {
                (self.hi[k] - offset) / w
            } else {
                (-offset - self.lo[k]) / w
            };
            return Ok(frac.clamp(0.0, 1.0));
        }
        if n != 2 {
            return Err(Error::Unsupported(
                "oblique half-spaces are supported in two dimensions only".into(),
            ));
        }
        let poly = vec![
            [self.lo[0], self.lo[1]],
            [self.hi[0], self.lo[1]],
            [self.hi[0], self.hi[1]],
            [self.lo[0], self.hi[1]],
        ];
        let clipped = clip_halfplane(&poly, normal, offset);
        Ok((polygon_area(&clipped) / self.volume()).clamp(0.0, 1.0))
    }
}

/// Sutherland-Hodgman clip of a convex polygon against `x·ν ≥ c`.
pub fn clip_halfplane(poly: &[[f64; 2]], normal: &[f64], offset: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| p[0] * normal[0] + p[1] * normal[1] - offset;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_fractions() {
        let b = Aabb::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(b.plane_section(&[1.0, 0.0], 0.5).unwrap(), 1.0);
        assert_eq!(b.plane_section(&[0.0, -1.0], -0.5).unwrap(), 2.0);
        assert_eq!(b.plane_section(&[1.0, 0.0], 3.0).unwrap(), 0.0);
        assert!(matches!(
            b.plane_section(&[1.0, 0.0], 2.0),
            Err(Error::BoundaryChargedBox(_))
        ));
        assert!((b.halfspace_fraction(&[1.0, 0.0], 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((b.halfspace_fraction(&[-1.0, 0.0], -0.5).unwrap() - 0.25).abs() < 1e-15);
        let s = 0.5f64.sqrt();
        // Diagonal of the unit square.
        let u = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((u.plane_section(&[s, -s], 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((u.halfspace_fraction(&[s, -s], 0.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((u.halfspace_fraction(&[s, s], s).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn empty_box_rejected() {
        assert_eq!(Aabb::new(vec![0.0], vec![0.0]), Err(Error::EmptyBox));
    }
}
