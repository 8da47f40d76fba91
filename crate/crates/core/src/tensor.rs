//! Small dense matrices, the symmetric/skew split, the symmetrized tensor
//! product and the change-of-base pushforward of polar atoms.
//!
//! Matrix norms are Frobenius throughout.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 4;

/// Dense `n × n` real matrix, `2 ≤ n ≤ 4`, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(
            (2..=MAX_DIM).contains(&n),
            "matrix dimension {n} outside 2..={MAX_DIM}"
        );
        Mat {
            n,
            a: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::Validation(format!(
                "matrix dimension {n} outside 2..={MAX_DIM}"
            )));
        }
        let mut m = Mat::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Validation("non-finite matrix entry".into()));
                }
                m[(i, j)] = x;
            }
        }
        Ok(m)
    }

    /// `[[a, b], [c, d]]`.
    pub fn new2(a: f64, b: f64, c: f64, d: f64) -> Self {
        let mut m = Mat::zeros(2);
        m[(0, 0)] = a;
        m[(0, 1)] = b;
        m[(1, 0)] = c;
        m[(1, 1)] = d;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)]).collect())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn sym(&self) -> Self {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn skew(&self) -> Self {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] - self[(j, i)]))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self[(i, j)] * other[(i, j)];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self[(i, j)].abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.a[..].iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.clone() - self.transpose()).max_abs() <= tol
    }

    pub fn is_skew(&self, tol: f64) -> bool {
        (self.clone() + self.transpose()).max_abs() <= tol
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.n, other.n);
        Mat::from_fn(self.n, |i, j| {
            (0..self.n).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `Mᵗ v`.
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)] * v[i]).sum())
            .collect()
    }

    /// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn det_inverse(&self) -> (f64, Option<Mat>) {
        let n = self.n;
        let mut m = *self;
        let mut inv = Mat::identity(n);
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r, &s| m[(r, col)].abs().total_cmp(&m[(s, col)].abs()))
                .unwrap();
            if m[(piv, col)] == 0.0 {
                return (0.0, None);
            }
            if piv != col {
                for j in 0..n {
                    let t = m[(col, j)];
                    m[(col, j)] = m[(piv, j)];
                    m[(piv, j)] = t;
                    let t = inv[(col, j)];
                    inv[(col, j)] = inv[(piv, j)];
                    inv[(piv, j)] = t;
                }
                det = -det;
            }
            let p = m[(col, col)];
            det *= p;
            for j in 0..n {
                m[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = m[(r, col)];
                    if f != 0.0 {
                        for j in 0..n {
                            m[(r, j)] -= f * m[(col, j)];
                            inv[(r, j)] -= f * inv[(col, j)];
                        }
                    }
                }
            }
        }
        (det, Some(inv))
    }

    pub fn det(&self) -> f64 {
        self.det_inverse().0
    }

    /// `a ⊗ b`, i.e. the matrix with entries `a_i b_j`.
    pub fn outer(a: &[f64], b: &[f64]) -> Mat {
        assert_eq!(a.len(), b.len());
        Mat::from_fn(a.len(), |i, j| a[i] * b[j])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i * MAX_DIM + j]
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(mut self, rhs: Mat) -> Mat {
        self += rhs;
        self
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for (x, y) in self.a.iter_mut().zip(rhs.a.iter()) {
            *x += y;
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(mut self, rhs: Mat) -> Mat {
        self -= rhs;
        self
    }
}

impl SubAssign for Mat {
    fn sub_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for (x, y) in self.a.iter_mut().zip(rhs.a.iter()) {
            *x -= y;
        }
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    fn mul(mut self, s: f64) -> Mat {
        for x in self.a.iter_mut() {
            *x *= s;
        }
        self
    }
}

impl Mul<Mat> for f64 {
    type Output = Mat;
    fn mul(self, m: Mat) -> Mat {
        m * self
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self * -1.0
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{:?}", self.rows())
    }
}

impl fmt::Display for Mat {
    /// Row-major with `;` between rows, the same format [`FromStr`] accepts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| {
                r.iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

impl FromStr for Mat {
    type Err = Error;

    /// Parses `"a,b;c,d"`.
    fn from_str(s: &str) -> Result<Self> {
        let rows = s
            .split(';')
            .map(|r| {
                r.split(',')
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|e| {
                            Error::Validation(format!("bad matrix entry {x:?}: {e}"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Mat::from_rows(&rows)
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Symmetric and skew parts of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymDecomp {
    pub sym: Mat,
    pub skew: Mat,
}

pub fn split(a: &Mat) -> SymDecomp {
    SymDecomp {
        sym: a.sym(),
        skew: a.skew(),
    }
}

/// Symmetrized tensor product `½(a⊗b + b⊗a)`.
pub fn odot(a: &[f64], b: &[f64]) -> Mat {
    assert_eq!(a.len(), b.len());
    Mat::from_fn(a.len(), |i, j| 0.5 * (a[i] * b[j] + b[i] * a[j]))
}

pub fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[k] = 1.0;
    e
}

/// Invertible linear change of coordinates `B`.
#[derive(Clone, Copy, Debug)]
pub struct BaseChange {
    b: Mat,
    b_inv: Mat,
    det_abs: f64,
}

impl BaseChange {
    pub fn new(b: Mat) -> Result<Self> {
        let (det, inv) = b.det_inverse();
        match inv {
            Some(b_inv) if det.abs() >= 1e-12 => Ok(BaseChange {
                b,
                b_inv,
                det_abs: det.abs(),
            }),
            _ => Err(Error::SingularBaseChange),
        }
    }

    /// A base change sending `eta ↦ e₁` and `xi ↦ e₂` (n = 2).
    pub fn aligning(eta: &[f64], xi: &[f64]) -> Result<Self> {
        let cols = Mat::from_rows(&[vec![eta[0], xi[0]], vec![eta[1], xi[1]]])?;
        let (_, inv) = cols.det_inverse();
        BaseChange::new(inv.ok_or(Error::SingularBaseChange)?)
    }

    pub fn matrix(&self) -> &Mat {
        &self.b
    }

    pub fn inverse_matrix(&self) -> &Mat {
        &self.b_inv
    }

    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    pub fn inverse(&self) -> BaseChange {
        BaseChange {
            b: self.b_inv,
            b_inv: self.b,
            det_abs: 1.0 / self.det_abs,
        }
    }
}

/// Transports a polar atom `mass · M` of an E-measure under `w̃(y) = B w(Bᵗ y)`.
///
/// Returns the unit-norm direction of `B M Bᵗ` and the transformed mass
/// `mass · |det B|⁻¹ · |B M Bᵗ| / |M|`.
pub fn pushforward_atom(bc: &BaseChange, m: &Mat, mass: f64) -> Result<(Mat, f64)> {
    if bc.det_abs < 1e-12 {
        return Err(Error::SingularBaseChange);
    }
    let m_norm = m.norm();
    if m_norm == 0.0 {
        return Err(Error::Validation("zero polar atom".into()));
    }
    let t = bc.b.matmul(m).matmul(&bc.b.transpose());
    let t_norm = t.norm();
    Ok((t * (1.0 / t_norm), mass / bc.det_abs * t_norm / m_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn split_of_a0_matches_hand_values() {
        let a0 = Mat::new2(1.0, -1.0, 1.0, 1.0);
        let d = split(&a0);
        assert_eq!(d.sym, Mat::identity(2));
        assert_eq!(d.skew, Mat::new2(0.0, -1.0, 1.0, 0.0));
        assert_eq!(split(&Mat::identity(3)).skew, Mat::zeros(3));
    }

    #[test]
    fn odot_basics() {
        let e1 = unit(2, 0);
        let e2 = unit(2, 1);
        assert_eq!(odot(&e1, &e2), Mat::new2(0.0, 0.5, 0.5, 0.0));
        assert_abs_diff_eq!(odot(&e1, &e2).norm(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(odot(&e1, &e1), Mat::new2(1.0, 0.0, 0.0, 0.0));
        assert_eq!(odot(&e1, &e1).norm(), 1.0);
    }

    #[test]
    fn parse_and_display_roundtrip() {
        let m: Mat = "1, 2; 3,4".parse().unwrap();
        assert_eq!(m, Mat::new2(1.0, 2.0, 3.0, 4.0));
        assert_eq!(m.to_string().parse::<Mat>().unwrap(), m);
        assert!("1,2;3".parse::<Mat>().is_err());
        assert!("1".parse::<Mat>().is_err());
    }

    #[test]
    fn inverse_and_det() {
        let m: Mat = "2,1,0;1,3,1;0,1,4".parse().unwrap();
        let (det, inv) = m.det_inverse();
        assert_abs_diff_eq!(det, 18.0, epsilon = 1e-12);
        let p = m.matmul(&inv.unwrap());
        assert!((p - Mat::identity(3)).max_abs() < 1e-14);
        assert_eq!(Mat::zeros(2).det_inverse().1, None);
    }

    #[test]
    fn pushforward_identity_is_noop() {
        let bc = BaseChange::new(Mat::identity(2)).unwrap();
        let m = odot(&[0.6, 0.8], &[1.0, 0.0]);
        let m = m * (1.0 / m.norm());
        let (d, mass) = pushforward_atom(&bc, &m, 3.0).unwrap();
        assert!((d - m).max_abs() < 1e-15);
        assert_abs_diff_eq!(mass, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn pushforward_aligning_frame() {
        let eta = [0.6, 0.8];
        let xi = [1.0, 0.0];
        let bc = BaseChange::aligning(&eta, &xi).unwrap();
        let b = bc.matrix();
        assert!(vnorm(&sub(&b.mul_vec(&eta), &[1.0, 0.0])) < 1e-14);
        assert!(vnorm(&sub(&b.mul_vec(&xi), &[0.0, 1.0])) < 1e-14);
        let ex = odot(&eta, &xi);
        let (d, mass) = pushforward_atom(&bc, &(ex * (1.0 / ex.norm())), 1.0).unwrap();
        let e12 = odot(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((d - e12 * (1.0 / e12.norm())).max_abs() < 1e-14);
        let expected = e12.norm() / ex.norm() / bc.det_abs();
        assert_abs_diff_eq!(mass, expected, epsilon = 1e-13);
    }

    #[test]
    fn pushforward_dilation_preserves_mass() {
        // w̃(y) = 2 w(2y): |Ew̃|(K/2) = |Ew|(K), so the atom mass is unchanged.
        let bc = BaseChange::new(Mat::identity(2) * 2.0).unwrap();
        let m = odot(&[1.0, 0.0], &[0.0, 1.0]);
        let m = m * (1.0 / m.norm());
        let (d, mass) = pushforward_atom(&bc, &m, 1.0).unwrap();
        assert!((d - m).max_abs() < 1e-15);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_base_change_rejected() {
        let err = BaseChange::new(Mat::new2(1.0, 2.0, 2.0, 4.0)).unwrap_err();
        assert!(err.to_string().contains("singular base change"));
    }

    fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn mat2() -> impl Strategy<Value = Mat> {
            prop::array::uniform4(-5.0f64..5.0).prop_map(|a| Mat::new2(a[0], a[1], a[2], a[3]))
        }

        proptest! {
            #[test]
            fn split_reconstructs(a in mat2()) {
                let d = split(&a);
                prop_assert!((d.sym + d.skew - a).max_abs() <= 1e-15 * (1.0 + a.max_abs()));
                prop_assert!(d.sym.is_symmetric(0.0));
                prop_assert!(d.skew.is_skew(0.0));
                let again = split(&d.sym);
                prop_assert_eq!(again.sym, d.sym);
                prop_assert_eq!(again.skew, Mat::zeros(2));
                let again = split(&d.skew);
                prop_assert_eq!(again.sym, Mat::zeros(2));
            }

            #[test]
            fn odot_commutes(a in prop::array::uniform3(-3.0f64..3.0), b in prop::array::uniform3(-3.0f64..3.0)) {
                prop_assert!((odot(&a, &b) - odot(&b, &a)).max_abs() <= 1e-15);
            }

            #[test]
            fn pushforward_roundtrip(b in mat2(), m in mat2(), mass in 0.0f64..10.0) {
                prop_assume!(b.det().abs() > 0.05);
                prop_assume!(m.sym().norm() > 1e-3);
                let m = m.sym() * (1.0 / m.sym().norm());
                let bc = BaseChange::new(b).unwrap();
                let (d, w) = pushforward_atom(&bc, &m, mass).unwrap();
                let (d2, w2) = pushforward_atom(&bc.inverse(), &d, w).unwrap();
                prop_assert!((d2 - m).max_abs() <= 1e-10);
                prop_assert!((w2 - mass).abs() <= 1e-10 * (1.0 + mass));
            }
        }
    }
}
