//! Box-constrained limited-memory BFGS with gradient projection.
//!
//! Variables sitting on a bound whose gradient points outward are frozen for
//! the iteration; the two-loop recursion runs on the remaining ones and the
//! step is projected back onto the box with an Armijo backtracking search.

/// Stopping rules and memory size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest component is below this.
    pub gtol: f64,
    /// Stop when `(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)` is below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 1000,
            gtol: 1e-6,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| {
            if (xi <= l && gi > 0.0) || (xi >= u && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient; a non-finite value is treated as a failed trial point.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    if !fx.is_finite() {
        return LbfgsOutcome {
            x,
            f: fx,
            iterations,
            evaluations,
            converged,
        };
    }

    while iterations < opts.max_iterations {
        let pg = projected_gradient(&x, &g, lower, upper);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();

        let mut d = two_loop(&pg, &s_hist, &y_hist, &free);
        if !(dot(&pg, &d) < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = pg.iter().map(|v| -v).collect();
        }

        let mut step = if s_hist.is_empty() {
            let norm = dot(&d, &d).sqrt();
            (1.0 / norm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut xn, lower, upper);
            let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &dx);
            if decrease >= 0.0 && dx.iter().all(|v| *v == 0.0) {
                break;
            }
            let (fn_, gn) = f(&xn);
            evaluations += 1;
            if fn_.is_finite() && decrease < 0.0 && fn_ <= fx + 1e-4 * decrease {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }

        let Some((xn, fn_, gn)) = accepted else {
            if s_hist.is_empty() {
                // steepest descent made no progress: at machine precision
                converged = pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gtol.sqrt();
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let rel = (fx - fn_) / fx.abs().max(fn_.abs()).max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel <= opts.ftol {
            converged = true;
            break;
        }
    }

    LbfgsOutcome {
        x,
        f: fx,
        iterations,
        evaluations,
        converged,
    }
}

/// `-H g` on the free variables, with `H` the L-BFGS inverse Hessian
/// approximation restricted to them.
fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], free: &[bool]) -> Vec<f64> {
    let masked = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(x, &f)| if f { *x } else { 0.0 })
            .collect()
    };
    let mut q = masked(g);
    let m = s_hist.len();
    let ss: Vec<Vec<f64>> = s_hist.iter().map(|s| masked(s)).collect();
    let ys: Vec<Vec<f64>> = y_hist.iter().map(|y| masked(y)).collect();
    let mut rho = vec![0.0; m];
    let mut alpha = vec![0.0; m];
    for i in (0..m).rev() {
        let sy = dot(&ss[i], &ys[i]);
        if sy <= 0.0 {
            continue;
        }
        rho[i] = 1.0 / sy;
        alpha[i] = rho[i] * dot(&ss[i], &q);
        for (qj, yj) in q.iter_mut().zip(&ys[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    let gamma = (0..m)
        .rev()
        .find(|&i| rho[i] > 0.0)
        .map_or(1.0, |i| 1.0 / (rho[i] * dot(&ys[i], &ys[i])));
    for v in &mut q {
        *v *= gamma;
    }
    for i in 0..m {
        if rho[i] == 0.0 {
            continue;
        }
        let beta = rho[i] * dot(&ys[i], &q);
        for (qj, sj) in q.iter_mut().zip(&ss[i]) {
            *qj += sj * (alpha[i] - beta);
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let inf = f64::INFINITY;
        let out = minimize(rosenbrock, &[-1.2, 1.0], &[-inf, -inf], &[inf, inf], &LbfgsOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn active_bound() {
        // minimum of (x-2)^2 + (y+1)^2 on [0,1]x[0,1] is (1, 0)
        let f = |x: &[f64]| {
            (
                (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)],
            )
        };
        let out = minimize(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &LbfgsOptions::default());
        assert!(out.converged);
        assert_eq!(out.x, vec![1.0, 0.0]);
    }

    #[test]
    fn start_outside_box_is_projected() {
        let f = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        let out = minimize(f, &[5.0], &[1.0], &[3.0], &LbfgsOptions::default());
        assert_eq!(out.x, vec![1.0]);
    }
}
