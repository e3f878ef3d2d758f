//! Limited-memory BFGS with a strong-Wolfe line search (two-loop recursion,
//! Nocedal-Wright Algorithms 3.5/3.6).

use nalgebra::DVector;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Iterations without best-value improvement before declaring stagnation.
    pub patience: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 100_000,
            grad_tol: 1e-8,
            patience: 200,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    /// Best-seen point, not necessarily the final iterate.
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
}

/// Minimizes `f` from `x0`. The closure returns the value and gradient.
pub fn minimize<F>(mut func: F, x0: DVector<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = func(&x);
    let mut best_x = x.clone();
    let mut best_f = fx;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut since_improvement = 0usize;
    let mut iterations = 0usize;

    if n == 0 {
        return LbfgsResult {
            x,
            f: fx,
            grad_norm: 0.0,
            iterations: 0,
            converged: true,
            stagnated: false,
        };
    }

    for iter in 0..opts.max_iters {
        iterations = iter;
        let gnorm = gx.amax();
        if gnorm <= opts.grad_tol {
            return LbfgsResult {
                x: best_x,
                f: best_f,
                grad_norm: gnorm,
                iterations: iter,
                converged: true,
                stagnated: false,
            };
        }

        let mut dir = two_loop(&gx, &history);
        dir.neg_mut();
        let mut slope = dir.dot(&gx);
        if slope >= 0.0 {
            // bad curvature information; fall back to steepest descent
            history.clear();
            dir = -gx.clone();
            slope = dir.dot(&gx);
        }

        let step0 = if history.is_empty() {
            (1.0 / gx.norm().max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let ls = wolfe_search(&mut func, &x, fx, &gx, &dir, slope, step0, opts);
        let (alpha, f_new, g_new) = match ls {
            Some(t) => t,
            None => {
                // line search failed; give up from the best point seen
                return LbfgsResult {
                    x: best_x,
                    f: best_f,
                    grad_norm: gnorm,
                    iterations: iter,
                    converged: false,
                    stagnated: true,
                };
            }
        };

        let x_new = &x + alpha * &dir;
        let s = &x_new - &x;
        let y = &g_new - &gx;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            if history.len() >= opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        x = x_new;
        fx = f_new;
        gx = g_new;

        if fx < best_f - 1e-15 * best_f.abs().max(1.0) {
            best_f = fx;
            best_x = x.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= opts.patience {
                return LbfgsResult {
                    x: best_x,
                    f: best_f,
                    grad_norm: gx.amax(),
                    iterations: iter,
                    converged: false,
                    stagnated: true,
                };
            }
        }
    }

    LbfgsResult {
        x: best_x,
        f: best_f,
        grad_norm: gx.amax(),
        iterations,
        converged: false,
        stagnated: false,
    }
}

fn two_loop(
    grad: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = s.dot(y) / y.dot(y);
        q *= gamma;
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}

type LineSearchHit = (f64, f64, DVector<f64>);

/// Strong-Wolfe line search. Returns `(alpha, f(x + alpha d), grad)`.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<F>(
    func: &mut F,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    dir: &DVector<f64>,
    slope0: f64,
    step0: f64,
    opts: &LbfgsOptions,
) -> Option<LineSearchHit>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let phi = |func: &mut F, alpha: f64| {
        let xt = x + alpha * dir;
        let (f, g) = func(&xt);
        let dphi = g.dot(dir);
        (f, dphi, g)
    };
    let _ = g0;

    let mut alpha_prev = 0.0f64;
    let mut f_prev = f0;
    let mut dphi_prev = slope0;
    let mut alpha = step0;

    for i in 0..opts.max_line_search {
        let (f, dphi, g) = phi(func, alpha);
        if f > f0 + opts.c1 * alpha * slope0 || (i > 0 && f >= f_prev) {
            return zoom(
                func, x, f0, slope0, dir, alpha_prev, f_prev, dphi_prev, alpha, f, opts,
            );
        }
        if dphi.abs() <= -opts.c2 * slope0 {
            return Some((alpha, f, g));
        }
        if dphi >= 0.0 {
            return zoom(func, x, f0, slope0, dir, alpha, f, dphi, alpha_prev, f_prev, opts);
        }
        alpha_prev = alpha;
        f_prev = f;
        dphi_prev = dphi;
        alpha *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    func: &mut F,
    x: &DVector<f64>,
    f0: f64,
    slope0: f64,
    dir: &DVector<f64>,
    mut lo: f64,
    mut f_lo: f64,
    mut dphi_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
    opts: &LbfgsOptions,
) -> Option<LineSearchHit>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    for _ in 0..opts.max_line_search {
        // quadratic interpolation through (lo, f_lo, dphi_lo) and (hi, f_hi),
        // with a bisection safeguard
        let mut alpha = 0.5 * (lo + hi);
        let span = hi - lo;
        let curv = (f_hi - f_lo - dphi_lo * span) / (span * span);
        if curv.is_finite() && curv.abs() > 1e-300 {
            let trial = lo - dphi_lo / (2.0 * curv);
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let margin = 0.1 * (b - a);
            if trial.is_finite() && trial > a + margin && trial < b - margin {
                alpha = trial;
            }
        }
        let xt = x + alpha * dir;
        let (f, g) = func(&xt);
        let dphi = g.dot(dir);
        if f > f0 + opts.c1 * alpha * slope0 || f >= f_lo {
            hi = alpha;
            f_hi = f;
        } else {
            if dphi.abs() <= -opts.c2 * slope0 {
                return Some((alpha, f, g));
            }
            if dphi * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = alpha;
            f_lo = f;
            dphi_lo = dphi;
        }
        if (hi - lo).abs() < 1e-16 {
            if f < f0 {
                return Some((alpha, f, g));
            }
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &DVector<f64>| {
            let v = 0.5 * x.dot(x);
            (v, x.clone())
        };
        let res = minimize(f, DVector::from_row_slice(&[3.0, -2.0, 7.0]), &LbfgsOptions::default());
        assert!(res.converged);
        assert!(res.f < 1e-16);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_row_slice(&[
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let res = minimize(
            f,
            DVector::from_row_slice(&[-1.2, 1.0]),
            &LbfgsOptions {
                grad_tol: 1e-10,
                ..Default::default()
            },
        );
        assert!(res.converged, "grad norm {}", res.grad_norm);
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn patience_triggers_on_flat_function() {
        // gradient never reaches tol, value never improves: must stagnate
        let f = |x: &DVector<f64>| (1.0, x.clone() * 0.0 + DVector::from_element(1, 1e-3));
        let res = minimize(
            f,
            DVector::zeros(1),
            &LbfgsOptions {
                patience: 5,
                max_iters: 1000,
                ..Default::default()
            },
        );
        assert!(res.stagnated || !res.converged);
    }
}
