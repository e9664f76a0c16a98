//! Small derivative-free minimizers used by the maximum-likelihood fits.

/// Outcome of a multivariate minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged once the largest parameter change in an iteration drops below this.
    pub step_tol: f64,
    pub grad_tol: f64,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            step_tol: 1e-6,
            grad_tol: 1e-7,
            fd_step: 1e-5,
        }
    }
}

/// Scans `n_grid + 1` equally spaced points on `[a, b]`, then polishes the
/// best one with Brent's method on its neighbouring cells.
pub fn grid_brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n_grid: usize, tol: f64) -> (f64, f64) {
    let n_grid = n_grid.max(2);
    let step = (b - a) / n_grid as f64;
    let mut best = (a, f64::INFINITY);
    let mut best_i = 0;
    for i in 0..=n_grid {
        let x = if i == n_grid { b } else { a + step * i as f64 };
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
            best_i = i;
        }
    }
    if !best.1.is_finite() {
        return best;
    }
    let lo = a + step * best_i.saturating_sub(1) as f64;
    let hi = (a + step * (best_i + 1) as f64).min(b);
    let polished = brent(&mut f, lo, hi, tol, 100);
    if polished.1 <= best.1 {
        polished
    } else {
        best
    }
}

/// Brent's method on `[a, b]`. Returns `(argmin, min)`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Box-constrained BFGS with central-difference gradients. Iterates are
/// projected back onto `[lower, upper]` after every line-search trial.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: BfgsOptions,
) -> Minimum {
    let n = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Minimum { x, value: fx, iterations: 0, converged: false };
    }
    let mut g = gradient(&mut f, &x, lower, upper, opts.fd_step);
    let mut h = identity(n);
    for iter in 1..=opts.max_iter {
        // free directions only: components pinned at a bound with the gradient pushing outward are frozen
        let mut dir = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                dir[i] -= h[i * n + j] * g[j];
            }
        }
        for i in 0..n {
            let at_lower = x[i] <= lower[i] && dir[i] < 0.0;
            let at_upper = x[i] >= upper[i] && dir[i] > 0.0;
            if at_lower || at_upper {
                dir[i] = 0.0;
            }
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            h = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
                if (x[i] <= lower[i] && dir[i] < 0.0) || (x[i] >= upper[i] && dir[i] > 0.0) {
                    dir[i] = 0.0;
                }
            }
            slope = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            if slope >= 0.0 {
                return Minimum { x, value: fx, iterations: iter, converged: true };
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial);
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            let small = g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-4;
            return Minimum { x, value: fx, iterations: iter, converged: small };
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let max_step = s.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let g_new = gradient(&mut f, &x_new, lower, upper, opts.fd_step);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += h[i * n + j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        let gmax = projected_grad_norm(&x, &g, lower, upper);
        if max_step < opts.step_tol || gmax < opts.grad_tol || improvement.abs() < 1e-13 * (1.0 + fx.abs()) {
            return Minimum { x, value: fx, iterations: iter, converged: true };
        }
    }
    Minimum { x, value: fx, iterations: opts.max_iter, converged: false }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let pinned = (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0);
        if !pinned {
            m = m.max(g[i].abs());
        }
    }
    m
}

fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], lower: &[f64], upper: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        let hi = (x[i] + step).min(upper[i]);
        let lo = (x[i] - step).max(lower[i]);
        probe[i] = hi;
        let fh = f(&probe);
        probe[i] = lo;
        let fl = f(&probe);
        probe[i] = x[i];
        g[i] = if hi > lo && fh.is_finite() && fl.is_finite() { (fh - fl) / (hi - lo) } else { 0.0 };
    }
    g
}
