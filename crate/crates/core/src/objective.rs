//! Fit metrics, reward, and constant optimization.
//!
//! The fit error is a normalized RMSE, optionally augmented with a penalty
//! for every input variable the candidate expression omits (each omitted
//! column is treated as predicted by zero).  The reward is `1/(1 + error)`,
//! so a perfect fit scores 1 and an invalid evaluation scores 0.
//!
//! ```
//! use symreg_core::expr::{BinOp, Expr, UnOp};
//! use symreg_core::objective::{optimize_constants, ConstOptOptions};
//! use symreg_core::rng::substream;
//!
//! // target: 2.2*sin(x) + 1.3, candidate skeleton: C*sin(x) + C
//! let x: Vec<Vec<f64>> = (0..40).map(|i| vec![-2.0 + 0.1 * i as f64]).collect();
//! let y: Vec<f64> = x.iter().map(|r| 2.2 * r[0].sin() + 1.3).collect();
//!
//! let skeleton = Expr::Bin(
//!     BinOp::Add,
//!     Box::new(Expr::Bin(
//!         BinOp::Mul,
//!         Box::new(Expr::Slot(0)),
//!         Box::new(Expr::Un(UnOp::Sin, Box::new(Expr::Var(0)))),
//!     )),
//!     Box::new(Expr::Slot(1)),
//! );
//!
//! let mut rng = substream(7, "constopt", 0);
//! let (c, metrics) =
//!     optimize_constants(&skeleton, &x, &y, 0.1, &ConstOptOptions::default(), &mut rng);
//! assert!((c[0] - 2.2).abs() < 1e-3 && (c[1] - 1.3).abs() < 1e-3);
//! assert!(metrics.reward > 0.9999);
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{contains_variable, evaluate, Expr};

/// Fit of one candidate expression against a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub nrmse: f64,
    pub s_nrmse: f64,
    pub reward: f64,
    pub valid: bool,
}

impl FitMetrics {
    pub fn invalid() -> Self {
        Self { nrmse: f64::INFINITY, s_nrmse: f64::INFINITY, reward: 0.0, valid: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstOptOptions {
    pub max_iterations: usize,
    pub restarts: usize,
    pub init_range: (f64, f64),
    pub gradient_step: f64,
    pub convergence_tol: f64,
}

impl Default for ConstOptOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            restarts: 4,
            init_range: (-2.0, 2.0),
            gradient_step: 1e-6,
            convergence_tol: 1e-8,
        }
    }
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// `(1/sigma_y) * sqrt(mean((y - y_hat)^2))` with the population standard
/// deviation. `None` on non-finite input, length < 2, or a constant target.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Option<f64> {
    if y.len() != y_hat.len() || y.len() < 2 {
        return None;
    }
    if y.iter().chain(y_hat.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let sigma = population_std(y);
    if sigma == 0.0 {
        return None;
    }
    let n = y.len() as f64;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    Some(mse.sqrt() / sigma)
}

/// NRMSE plus, for every variable `x_j` absent from the tree, the penalty
/// `lambda * rms(x_j) / sigma(x_j)` (the omitted column is predicted by
/// zero). A constant missing column contributes nothing.
pub fn s_nrmse(tree: &Expr, x: &[Vec<f64>], y: &[f64], y_hat: &[f64], lambda: f64) -> Option<f64> {
    let base = nrmse(y, y_hat)?;
    if lambda == 0.0 {
        return Some(base);
    }
    let m = x.first().map(|r| r.len()).unwrap_or(0);
    let n = x.len() as f64;
    let mut penalty = 0.0;
    for j in 0..m {
        if contains_variable(tree, j) {
            continue;
        }
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let sigma = population_std(&col);
        if sigma == 0.0 {
            continue;
        }
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        penalty += rms / sigma;
    }
    Some(base + lambda * penalty)
}

/// `1/(1 + s)`; an invalid fit maps to 0.
pub fn reward(s: Option<f64>) -> f64 {
    match s {
        Some(s) if s.is_finite() && s >= 0.0 => 1.0 / (1.0 + s),
        _ => 0.0,
    }
}

/// Full metrics of `tree` with the given constants bound.
pub fn fit_metrics(tree: &Expr, x: &[Vec<f64>], y: &[f64], constants: &[f64], lambda: f64) -> FitMetrics {
    let y_hat = match evaluate(tree, x, constants) {
        Ok(Some(v)) => v,
        _ => return FitMetrics::invalid(),
    };
    let (Some(n), Some(s)) = (nrmse(y, &y_hat), s_nrmse(tree, x, y, &y_hat, lambda)) else {
        return FitMetrics::invalid();
    };
    FitMetrics { nrmse: n, s_nrmse: s, reward: reward(Some(s)), valid: true }
}

/// Central finite-difference gradient with per-coordinate step
/// `h = step * (1 + |x_i|)`.
fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Option<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Some(g)
}

/// BFGS with numeric gradients and Armijo backtracking. Returns the best
/// point reached; the objective may return infinity for invalid regions.
pub fn bfgs_minimize(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    opts: &ConstOptOptions,
) -> (Vec<f64>, f64) {
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return (x, fx);
    }
    // inverse Hessian approximation, row-major k x k, starts as identity
    let mut h_inv = vec![0.0; k * k];
    for i in 0..k {
        h_inv[i * k + i] = 1.0;
    }
    let Some(mut g) = numeric_gradient(f, &x, opts.gradient_step) else {
        return (x, fx);
    };
    for _ in 0..opts.max_iterations {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < opts.convergence_tol {
            break;
        }
        // d = -H g
        let mut d = vec![0.0; k];
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += h_inv[i * k + j] * g[j];
            }
            d[i] = -s;
        }
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // not a descent direction, reset to steepest descent
            for i in 0..k {
                for j in 0..k {
                    h_inv[i * k + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for i in 0..k {
                d[i] = -g[i];
            }
        }
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut x_new = x.clone();
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..k {
                x_new[i] = x[i] + alpha * d[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let Some(g_new) = numeric_gradient(f, &x_new, opts.gradient_step) else {
            x = x_new;
            fx = f_new;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            // BFGS inverse update: H = (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    hy[i] += h_inv[i * k + j] * yv[j];
                }
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..k {
                for j in 0..k {
                    h_inv[i * k + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }
        let step_size = s.iter().map(|v| v.abs()).fold(0.0, f64::max);
        x = x_new;
        fx = f_new;
        g = g_new;
        if step_size < opts.convergence_tol * 0.01 {
            break;
        }
    }
    (x, fx)
}

/// Fits the constant slots of `tree` to the data by minimizing the penalized
/// fit error. Starts from all-ones plus `restarts` random initializations
/// and keeps the best outcome; the result is never worse than the all-ones
/// start because the line search only accepts decreases.
pub fn optimize_constants<R: Rng>(
    tree: &Expr,
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    opts: &ConstOptOptions,
    rng: &mut R,
) -> (Vec<f64>, FitMetrics) {
    let k = tree.n_slots();
    if k == 0 {
        return (Vec::new(), fit_metrics(tree, x, y, &[], lambda));
    }
    let objective = |c: &[f64]| -> f64 {
        let m = fit_metrics(tree, x, y, c, lambda);
        if m.valid {
            m.s_nrmse
        } else {
            f64::INFINITY
        }
    };
    let (lo, hi) = opts.init_range;
    let mut starts = vec![vec![1.0; k]];
    for _ in 0..opts.restarts {
        starts.push((0..k).map(|_| rng.gen_range(lo..hi)).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (c, fc) = bfgs_minimize(&objective, &start, opts);
        if fc.is_finite() && best.as_ref().map(|(_, b)| fc < *b).unwrap_or(true) {
            best = Some((c, fc));
        }
    }
    match best {
        Some((c, _)) => {
            let m = fit_metrics(tree, x, y, &c, lambda);
            (c, m)
        }
        None => (vec![1.0; k], FitMetrics::invalid()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinOp, UnOp};
    use crate::rng::substream;

    #[test]
    fn nrmse_examples() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(nrmse(&y, &y), Some(0.0));
        assert_eq!(nrmse(&[0.0, 2.0], &[1.0, 1.0]), Some(1.0));
        assert_eq!(nrmse(&[1.0, 1.0], &[1.0, 2.0]), None); // sigma_y = 0
    }

    #[test]
    fn s_nrmse_missing_variable_penalty() {
        // tree uses only x1; x2 column [1, -1] has sigma 1 and rms 1
        let tree = Expr::Var(0);
        let x = vec![vec![0.0, 1.0], vec![2.0, -1.0]];
        let y = vec![0.0, 2.0];
        let y_hat = y.clone();
        assert_eq!(s_nrmse(&tree, &x, &y, &y_hat, 1.0), Some(1.0));
        assert_eq!(s_nrmse(&tree, &x, &y, &y_hat, 0.0), Some(0.0));

        // a tree using every variable pays no penalty
        let both = Expr::Bin(BinOp::Add, Box::new(Expr::Var(0)), Box::new(Expr::Var(1)));
        assert_eq!(s_nrmse(&both, &x, &y, &y_hat, 1.0), nrmse(&y, &y_hat));
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(Some(0.0)), 1.0);
        assert_eq!(reward(Some(1.0)), 0.5);
        assert_eq!(reward(Some(3.0)), 0.25);
        assert_eq!(reward(None), 0.0);
    }

    #[test]
    fn bfgs_quadratic_converges() {
        let target = [1.5, -2.5, 0.25];
        let f = |c: &[f64]| -> f64 {
            c.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let opts = ConstOptOptions::default();
        let (x, fx) = bfgs_minimize(&f, &[0.0, 0.0, 0.0], &opts);
        assert!(fx < 1e-12);
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_constant_matches_least_squares() {
        // y = 3x, skeleton C*x
        let tree = Expr::Bin(BinOp::Mul, Box::new(Expr::Slot(0)), Box::new(Expr::Var(0)));
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3 - 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0]).collect();
        let mut rng = substream(1, "constopt", 0);
        let (c, m) = optimize_constants(&tree, &x, &y, 0.1, &ConstOptOptions::default(), &mut rng);
        assert!(m.valid);
        assert!((c[0] - 3.0).abs() < 1e-6, "C = {}", c[0]);
    }

    #[test]
    fn sine_worked_example() {
        // data from 2.2*sin(x) + 1.3, skeleton C*sin(x) + C
        let tree = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Slot(0)),
                Box::new(Expr::Un(UnOp::Sin, Box::new(Expr::Var(0)))),
            )),
            Box::new(Expr::Slot(1)),
        );
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 + i as f64 * 0.1]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.2 * r[0].sin() + 1.3).collect();
        let mut rng = substream(9, "constopt", 0);
        let (c, m) = optimize_constants(&tree, &x, &y, 0.1, &ConstOptOptions::default(), &mut rng);
        assert!(m.valid);
        assert!((c[0] - 2.2).abs() < 1e-3 && (c[1] - 1.3).abs() < 1e-3, "c = {c:?}");
        assert!(m.reward > 0.999);
    }

    #[test]
    fn zero_slots_evaluates_directly() {
        let tree = Expr::Var(0);
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        let mut rng = substream(2, "constopt", 0);
        let (c, m) = optimize_constants(&tree, &x, &y, 0.1, &ConstOptOptions::default(), &mut rng);
        assert!(c.is_empty());
        assert_eq!(m.reward, 1.0);
    }

    #[test]
    fn invalid_everywhere_yields_invalid_fit() {
        // log(-|C| - exp(x)) style: log of a negative for any constant
        let tree = Expr::Un(
            UnOp::Log,
            Box::new(Expr::Bin(
                BinOp::Sub,
                Box::new(Expr::Lit(-10.0)),
                Box::new(Expr::Un(UnOp::Sq, Box::new(Expr::Slot(0)))),
            )),
        );
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        let mut rng = substream(3, "constopt", 0);
        let (_, m) = optimize_constants(&tree, &x, &y, 0.1, &ConstOptOptions::default(), &mut rng);
        assert!(!m.valid);
        assert_eq!(m.reward, 0.0);
    }
}
