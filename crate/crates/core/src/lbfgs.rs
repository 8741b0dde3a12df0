//! Limited-memory BFGS with Armijo backtracking, for smooth unconstrained problems.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of the cost stays below this.
    pub cost_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            grad_tol: 1e-12,
            cost_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub cost: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `fg`, which returns the cost and its gradient. The returned cost
/// never exceeds the starting one.
pub(crate) fn minimize(mut fg: impl FnMut(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, opts: Options) -> Outcome {
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < opts.max_iterations && max_norm(&g) > opts.grad_tol {
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history.back().map_or(1.0 / max_norm(&g).max(1e-300), |(s, y, _)| dot(s, y) / dot(y, y));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            dir = g.iter().map(|v| -v / max_norm(&g)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = fg(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else { break };
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let decrease = f - fnew;
        x = xn;
        g = gn;
        f = fnew;
        if decrease <= opts.cost_tol * f.abs().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Outcome { x, cost: f }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fg = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (f, g)
        };
        let out = minimize(
            fg,
            vec![-1.2, 1.0],
            Options {
                max_iterations: 1000,
                ..Options::default()
            },
        );
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let fg = |x: &[f64]| {
            let f = x.iter().zip(diag).map(|(v, d)| 0.5 * d * v * v).sum();
            (f, x.iter().zip(diag).map(|(v, d)| d * v).collect())
        };
        let out = minimize(fg, vec![1.0; 4], Options::default());
        assert!(out.cost < 1e-20);
    }
}
