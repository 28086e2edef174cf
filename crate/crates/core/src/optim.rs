//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Deterministic: no randomness, fixed evaluation order. The line search
//! only accepts steps that decrease the objective, so the iterate sequence
//! is monotone in the objective value.

use std::collections::VecDeque;

/// Objective with an explicit gradient. `value` is called at line-search
/// trial points; `value_and_grad` only at accepted iterates.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    /// Returns the value at `x` and writes the gradient into `grad`.
    fn value_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    /// Number of (s, y) pairs kept for the inverse-Hessian approximation.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the gradient's Euclidean norm drops to this value.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Step-halving attempts per iteration before giving up.
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 1000,
            grad_tol: 1e-6,
            c1: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// True when the gradient tolerance was reached (as opposed to hitting
    /// the iteration cap or a stalled line search).
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `obj` starting from `x0`.
pub fn minimize<O: Objective>(obj: &mut O, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsResult {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = obj.value_and_grad(&x, &mut grad);

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut direction = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut new_grad = vec![0.0; n];

    for iteration in 0..cfg.max_iters {
        let grad_norm = norm(&grad);
        if grad_norm <= cfg.grad_tol {
            return LbfgsResult { x, value, grad_norm, iterations: iteration, converged: true };
        }

        two_loop_direction(&grad, &history, &mut direction);
        let mut descent = dot(&grad, &direction);
        if !(descent < 0.0) {
            // Curvature information went bad; fall back to steepest descent.
            history.clear();
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            descent = -grad_norm * grad_norm;
        }

        // Backtracking Armijo line search starting at the natural step 1.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            for i in 0..n {
                trial[i] = x[i] + step * direction[i];
            }
            let trial_value = obj.value(&trial);
            if trial_value.is_finite() && trial_value <= value + cfg.c1 * step * descent {
                accepted = Some(trial_value);
                break;
            }
            step *= 0.5;
        }
        if accepted.is_none() {
            // No decrease found along the direction; report where we stand.
            return LbfgsResult { x, value, grad_norm, iterations: iteration, converged: false };
        }

        let new_value = obj.value_and_grad(&trial, &mut new_grad);

        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut new_grad);
        value = new_value;
    }

    let grad_norm = norm(&grad);
    LbfgsResult {
        x,
        value,
        grad_norm,
        iterations: cfg.max_iters,
        converged: grad_norm <= cfg.grad_tol,
    }
}

/// Two-loop recursion: writes `-H * grad` into `direction`, where `H` is
/// the L-BFGS inverse-Hessian approximation.
fn two_loop_direction(
    grad: &[f64],
    history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    direction: &mut [f64],
) {
    direction.copy_from_slice(grad);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, direction);
        for (d, yi) in direction.iter_mut().zip(y) {
            *d -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for d in direction.iter_mut() {
            *d *= gamma;
        }
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, direction);
        for (d, si) in direction.iter_mut().zip(s) {
            *d += (alpha - beta) * si;
        }
    }
    for d in direction.iter_mut() {
        *d = -*d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        scales: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&mut self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.center)
                .zip(&self.scales)
                .map(|((x, c), s)| s * (x - c) * (x - c))
                .sum()
        }
        fn value_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
            for i in 0..x.len() {
                grad[i] = 2.0 * self.scales[i] * (x[i] - self.center[i]);
            }
            self.value(x)
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&mut self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            grad[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.value(x)
        }
    }

    /// Monotonicity recorder: fails if any accepted value increases.
    struct Monotone<O: Objective> {
        inner: O,
        accepted: Vec<f64>,
    }

    impl<O: Objective> Objective for Monotone<O> {
        fn value(&mut self, x: &[f64]) -> f64 {
            self.inner.value(x)
        }
        fn value_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
            let v = self.inner.value_and_grad(x, grad);
            self.accepted.push(v);
            v
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let mut obj = Quadratic {
            center: vec![3.0, -1.0, 0.5, 10.0],
            scales: vec![100.0, 1.0, 0.01, 5.0],
        };
        let result = minimize(&mut obj, vec![0.0; 4], &LbfgsConfig::default());
        assert!(result.converged, "grad norm {}", result.grad_norm);
        let center = obj.center.clone();
        for (x, c) in result.x.iter().zip(&center) {
            assert!((x - c).abs() < 1e-3, "{x} vs {c}");
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let result = minimize(&mut Rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default());
        assert!(result.converged);
        assert!((result.x[0] - 1.0).abs() < 1e-5);
        assert!((result.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn accepted_values_never_increase() {
        let mut obj = Monotone { inner: Rosenbrock, accepted: Vec::new() };
        minimize(&mut obj, vec![-1.2, 1.0], &LbfgsConfig::default());
        for pair in obj.accepted.windows(2) {
            assert!(pair[1] <= pair[0], "objective increased: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || minimize(&mut Rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default());
        let (a, b) = (run(), run());
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
        assert!(a.value == b.value);
    }

    #[test]
    fn iteration_cap_respected() {
        let cfg = LbfgsConfig { max_iters: 3, ..LbfgsConfig::default() };
        let result = minimize(&mut Rosenbrock, vec![-1.2, 1.0], &cfg);
        assert_eq!(result.iterations, 3);
        assert!(!result.converged);
    }

    #[test]
    fn starting_at_the_optimum_returns_immediately() {
        let mut obj = Quadratic { center: vec![2.0, -4.0], scales: vec![1.0, 1.0] };
        let result = minimize(&mut obj, vec![2.0, -4.0], &LbfgsConfig::default());
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.x, vec![2.0, -4.0]);
    }
}
