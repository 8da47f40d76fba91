//! Limited-memory BFGS with backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Absolute tolerance on the gradient norm.
    pub grad_tol: f64,
    pub c1: f64,
    pub max_backtracks: usize,
    /// Stop when `f` improves by less than `stall_tol · max(|f|, 1)` over
    /// `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 2000,
            grad_tol: 1e-8,
            c1: 1e-4,
            max_backtracks: 50,
            stall_window: 100,
            stall_tol: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    MaxIters,
    LineSearch,
    Stalled,
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub evals: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`; the closure writes the gradient into its second argument
/// and returns the value.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut gn = dot(&g, &g).sqrt();
    if !fx.is_finite() || !gn.is_finite() {
        return LbfgsResult { x, f: fx, grad_norm: gn, iters: 0, evals, reason: StopReason::NonFinite };
    }
    let mut xn = vec![0.0; n];
    let mut gnew = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut window_start = fx;
    for iter in 0..opts.max_iters {
        if gn <= opts.grad_tol || n == 0 {
            return LbfgsResult { x, f: fx, grad_norm: gn, iters: iter, evals, reason: StopReason::GradTol };
        }
        if opts.stall_window > 0 && iter > 0 && iter % opts.stall_window == 0 {
            if window_start - fx <= opts.stall_tol * fx.abs().max(1.0) {
                return LbfgsResult { x, f: fx, grad_norm: gn, iters: iter, evals, reason: StopReason::Stalled };
            }
            window_start = fx;
        }
        // Two-loop recursion.
        d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(d, y)| *d -= a * y);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gn.max(1.0),
        };
        d.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            d.iter_mut().zip(s).for_each(|(d, s)| *d += (a - b) * s);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // Not a descent direction; restart from steepest descent.
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g / gn.max(1.0));
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = false;
        let mut fnew = fx;
        for _ in 0..opts.max_backtracks {
            xn.iter_mut()
                .zip(x.iter().zip(&d))
                .for_each(|(xn, (x, d))| *xn = x + step * d);
            fnew = f(&xn, &mut gnew);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + opts.c1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if hist.is_empty() {
                return LbfgsResult { x, f: fx, grad_norm: gn, iters: iter, evals, reason: StopReason::LineSearch };
            }
            // Drop curvature memory and try once more from steepest descent.
            hist.clear();
            continue;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gnew);
        fx = fnew;
        gn = dot(&g, &g).sqrt();
    }
    let reason = if gn <= opts.grad_tol { StopReason::GradTol } else { StopReason::MaxIters };
    LbfgsResult { x, f: fx, grad_norm: gn, iters: opts.max_iters, evals, reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            &LbfgsOptions { grad_tol: 1e-10, ..Default::default() },
        );
        assert_eq!(r.reason, StopReason::GradTol);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_in_many_variables() {
        let n = 200;
        let r = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..n {
                    let c = 1.0 + i as f64;
                    f += 0.5 * c * (x[i] - 1.0).powi(2);
                    g[i] = c * (x[i] - 1.0);
                }
                f
            },
            vec![0.0; n],
            &LbfgsOptions { grad_tol: 1e-9, ..Default::default() },
        );
        assert!(r.f < 1e-15);
    }
}
