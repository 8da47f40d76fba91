//! Gauss-Legendre rules and piecewise tensor-product integration over boxes.

use std::sync::OnceLock;

/// Nodes and weights of the `q`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        // Newton iteration from the Chebyshev-like initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(q, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(q, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[q - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(q: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Cached 2-point rule.
pub fn gauss2() -> &'static (Vec<f64>, Vec<f64>) {
    static G: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    G.get_or_init(|| gauss_legendre(2))
}

/// Integrates `f` over `[lo, hi]` with `pieces` equal sub-intervals between
/// every pair of consecutive `breaks` and a `q`-point rule on each.
pub fn integrate_1d(
    lo: f64,
    hi: f64,
    breaks: &[f64],
    pieces: usize,
    q: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let (x, w) = gauss_legendre(q);
    let cuts = cut_points(lo, hi, breaks, pieces);
    let mut s = 0.0;
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * half * f(mid + half * xi);
        }
    }
    s
}

/// Sorted cut points of `[lo, hi]`: the interior breaks plus `pieces` uniform
/// subdivisions of each resulting segment.
pub fn cut_points(lo: f64, hi: f64, breaks: &[f64], pieces: usize) -> Vec<f64> {
    let mut b: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&t| t > lo && t < hi)
        .collect();
    b.push(lo);
    b.push(hi);
    b.sort_by(f64::total_cmp);
    b.dedup();
    let pieces = pieces.max(1);
    let mut out = Vec::with_capacity(b.len() * pieces);
    for seg in b.windows(2) {
        for k in 0..pieces {
            out.push(seg[0] + (seg[1] - seg[0]) * k as f64 / pieces as f64);
        }
    }
    out.push(hi);
    out
}

/// Tensor-product integration over an axis-aligned box split along each axis
/// at the given breakpoints.
pub fn integrate_box(
    lo: &[f64],
    hi: &[f64],
    breaks: &[Vec<f64>],
    pieces: usize,
    q: usize,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> f64 {
    let n = lo.len();
    let (gx, gw) = gauss_legendre(q);
    let cuts: Vec<Vec<f64>> = (0..n)
        .map(|d| cut_points(lo[d], hi[d], &breaks[d], pieces))
        .collect();
    // Per-axis flattened nodes and weights.
    let axes: Vec<Vec<(f64, f64)>> = cuts
        .iter()
        .map(|c| {
            let mut v = Vec::with_capacity((c.len() - 1) * q);
            for seg in c.windows(2) {
                let half = 0.5 * (seg[1] - seg[0]);
                let mid = 0.5 * (seg[0] + seg[1]);
                for (xi, wi) in gx.iter().zip(&gw) {
                    v.push((mid + half * xi, wi * half));
                }
            }
            v
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut s = 0.0;
    loop {
        let mut w = 1.0;
        for d in 0..n {
            let (p, wd) = axes[d][idx[d]];
            x[d] = p;
            w *= wd;
        }
        s += w * f(&x);
        let mut d = 0;
        loop {
            if d == n {
                return s;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for q in 1..=12 {
            let (x, w) = gauss_legendre(q);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * q {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((got - exact).abs() < 1e-13, "q={q} deg={deg}");
            }
        }
        let (x, _) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn piecewise_integration_handles_breaks() {
        let step = |t: f64| if t >= 0.3 { 1.0 } else { 0.0 };
        let v = integrate_1d(0.0, 1.0, &[0.3], 1, 2, step);
        assert!((v - 0.7).abs() < 1e-15);
        let mut f = |x: &[f64]| x[0] * x[1];
        let v = integrate_box(&[0.0, 0.0], &[1.0, 2.0], &[vec![], vec![]], 1, 2, &mut f);
        assert!((v - 1.0).abs() < 1e-14);
    }
}
