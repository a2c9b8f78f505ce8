//! Sequential minimal optimization for the C-SVC dual
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C_i
//! ```
//!
//! with `Q_ij = y_i y_j K_ij`. Each iteration picks the maximal violating
//! pair and solves the two-variable subproblem analytically.

use serde::{Deserialize, Serialize};

use super::kernel::KernelRows;

const TAU: f64 = 1e-12;
/// Relative distance to a bound below which a multiplier is put on it.
const SNAP_REL: f64 = 1e-12;
/// Iterations between shrinking passes (capped by the problem size).
const SHRINK_PERIOD: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the maximal KKT violation `m(a) - M(a)` is at most this.
    pub tol: f64,
    /// Iteration budget expressed in kernel evaluations; each iteration
    /// reads two kernel rows.
    pub max_kernel_evals: u64,
    /// Kernel cache budget in bytes.
    pub cache_bytes: usize,
    /// Set aside bounded variables that cannot currently violate
    /// optimality. Deterministic; the result satisfies the same stopping
    /// rule on all variables.
    #[serde(default = "default_shrinking")]
    pub shrinking: bool,
}

fn default_shrinking() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-3,
            max_kernel_evals: 10_000_000,
            cache_bytes: 64 << 20,
            shrinking: true,
        }
    }
}

impl SolverConfig {
    pub fn max_iter(&self, n: usize) -> u64 {
        (self.max_kernel_evals / (2 * n.max(1)) as u64).max(1_000)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Offset of the decision function `f(x) = sum a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub objective: f64,
    pub iterations: u64,
    pub converged: bool,
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        a < c
    } else {
        a > 0.0
    }
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    if y > 0.0 {
        a > 0.0
    } else {
        a < c
    }
}

/// Solves the dual for labels `y` in {-1, +1} and per-sample upper bounds.
pub fn solve<K: KernelRows>(
    kernel: &mut K,
    y: &[f64],
    upper: &[f64],
    cfg: &SolverConfig,
) -> DualSolution {
    solve_from(kernel, y, upper, cfg, None)
}

/// Like [`solve`], starting from a feasible `init` (for example the
/// solution for a smaller C, which stays feasible when the box grows).
pub fn solve_from<K: KernelRows>(
    kernel: &mut K,
    y: &[f64],
    upper: &[f64],
    cfg: &SolverConfig,
    init: Option<&[f64]>,
) -> DualSolution {
    let n = kernel.len();
    debug_assert_eq!(y.len(), n);
    debug_assert_eq!(upper.len(), n);

    let mut ki_buf = vec![0.0; n];
    let mut kj_buf = vec![0.0; n];
    // gradient of the dual objective, Qa - e
    let mut grad = vec![-1.0; n];
    let alpha0: Vec<f64> = match init {
        Some(a) => a
            .iter()
            .zip(upper)
            .map(|(&a, &c)| a.clamp(0.0, c))
            .collect(),
        None => vec![0.0; n],
    };
    for (j, &a) in alpha0.iter().enumerate() {
        if a != 0.0 {
            kernel.row_into(j, &mut ki_buf);
            let s = a * y[j];
            for t in 0..n {
                grad[t] += y[t] * ki_buf[t] * s;
            }
        }
    }
    let mut alpha = alpha0;
    // 0 for members of I_up / I_low, an infinite penalty otherwise, so the
    // selection scan below needs no data-dependent branches
    let up_pen = |t: usize, a: f64| {
        if in_up(y[t], a, upper[t]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    };
    let low_pen = |t: usize, a: f64| {
        if in_low(y[t], a, upper[t]) {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mut up: Vec<f64> = (0..n).map(|t| up_pen(t, alpha[t])).collect();
    let mut low: Vec<f64> = (0..n).map(|t| low_pen(t, alpha[t])).collect();
    let max_iter = cfg.max_iter(n);
    let mut iterations = 0;
    let mut converged = false;

    // Variables that sit at a bound and cannot join a violating pair are
    // set aside; `active` stays sorted so ties still go to the lowest index.
    let shrink_every = n.min(SHRINK_PERIOD);
    let mut active: Vec<usize> = (0..n).collect();
    let mut countdown = shrink_every;
    let mut unshrunk = false;

    loop {
        if cfg.shrinking {
            countdown -= 1;
            if countdown == 0 {
                countdown = shrink_every;
                let (m, big_m) = extremes(&active, y, &grad, &up, &low);
                if !unshrunk && m - big_m <= 10.0 * cfg.tol {
                    unshrunk = true;
                    reconstruct(kernel, y, &alpha, &active, &mut grad, &mut ki_buf);
                    active = (0..n).collect();
                }
                active.retain(|&t| {
                    let v = -y[t] * grad[t];
                    let only_up = up[t] == 0.0 && low[t] != 0.0;
                    let only_low = low[t] == 0.0 && up[t] != 0.0;
                    !((only_up && v < big_m) || (only_low && v > m))
                });
            }
        }

        // i maximizes -y_t G_t over I_up, j minimizes it over I_low;
        // strict comparisons keep the lowest index on ties
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        if active.len() == n {
            for (t, (((&yt, &gt), &ut), &lt)) in y.iter().zip(&grad).zip(&up).zip(&low).enumerate()
            {
                let v = -yt * gt;
                if v + ut > gmax {
                    gmax = v + ut;
                    i = t;
                }
                if v + lt < gmin {
                    gmin = v + lt;
                    j = t;
                }
            }
        } else {
            for &t in &active {
                let v = -y[t] * grad[t];
                if v + up[t] > gmax {
                    gmax = v + up[t];
                    i = t;
                }
                if v + low[t] < gmin {
                    gmin = v + low[t];
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= cfg.tol {
            if active.len() < n {
                reconstruct(kernel, y, &alpha, &active, &mut grad, &mut ki_buf);
                active = (0..n).collect();
                countdown = shrink_every;
                continue;
            }
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ki, kj) = kernel.row_pair(i, j, &mut ki_buf, &mut kj_buf);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        let (mut ai, mut aj) = (old_ai, old_aj);

        if y[i] != y[j] {
            let mut quad = ki[i] + kj[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let mut quad = ki[i] + kj[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = snap(ai, ci);
        alpha[j] = snap(aj, cj);
        let (ai, aj) = (alpha[i], alpha[j]);
        up[i] = up_pen(i, ai);
        up[j] = up_pen(j, aj);
        low[i] = low_pen(i, ai);
        low[j] = low_pen(j, aj);

        let di = (ai - old_ai) * y[i];
        let dj = (aj - old_aj) * y[j];
        if active.len() == n {
            for (((g, &yt), &a), &b) in grad.iter_mut().zip(y).zip(ki).zip(kj) {
                *g += yt * (a * di + b * dj);
            }
        } else {
            for &t in &active {
                grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
            }
        }
    }
    if active.len() < n {
        reconstruct(kernel, y, &alpha, &active, &mut grad, &mut ki_buf);
    }

    let rho = offset(y, &alpha, upper, &grad);
    // 1/2 a'Qa - e'a = 1/2 a'(G + e) - e'a = 1/2 a'(G - e)
    let objective = alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
        / 2.0;
    DualSolution {
        alpha,
        rho,
        objective,
        iterations,
        converged,
    }
}

/// `m(a)` over I_up and `M(a)` over I_low, restricted to `active`.
fn extremes(active: &[usize], y: &[f64], grad: &[f64], up: &[f64], low: &[f64]) -> (f64, f64) {
    let (mut m, mut big_m) = (f64::NEG_INFINITY, f64::INFINITY);
    for &t in active {
        let v = -y[t] * grad[t];
        m = m.max(v + up[t]);
        big_m = big_m.min(v + low[t]);
    }
    (m, big_m)
}

/// Recomputes the gradient of every variable outside `active` (sorted)
/// from the nonzero multipliers.
fn reconstruct<K: KernelRows>(
    kernel: &mut K,
    y: &[f64],
    alpha: &[f64],
    active: &[usize],
    grad: &mut [f64],
    buf: &mut [f64],
) {
    let mut inactive = Vec::with_capacity(y.len() - active.len());
    let mut next = active.iter().peekable();
    for (t, g) in grad.iter_mut().enumerate() {
        if next.peek() == Some(&&t) {
            next.next();
        } else {
            inactive.push(t);
            *g = -1.0;
        }
    }
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            kernel.row_into(j, buf);
            let s = a * y[j];
            for &t in &inactive {
                grad[t] += y[t] * buf[t] * s;
            }
        }
    }
}

/// Puts a multiplier that lies within rounding error of a bound onto it.
#[inline]
fn snap(a: f64, c: f64) -> f64 {
    let eps = SNAP_REL * c;
    if a >= c - eps {
        c
    } else if a <= eps {
        0.0
    } else {
        a
    }
}

/// `rho` averaged over free variables, or the midpoint of the feasible
/// interval when every variable sits at a bound.
fn offset(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= upper[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::super::kernel::Gram;
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn two_points_closed_form() {
        // dual optimum for two opposite points: a = 2 / (2 - 2k), rho = 0
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let gamma = 0.8;
        let gram = Gram::new(&x, gamma);
        let idx = [0, 1];
        let cfg = SolverConfig {
            tol: 1e-12,
            ..SolverConfig::default()
        };
        let sol = solve(&mut gram.view(&idx), &[1.0, -1.0], &[1e6, 1e6], &cfg);
        let k = (-gamma).exp();
        let expected = 1.0 / (1.0 - k);
        assert!(sol.converged);
        assert!((sol.alpha[0] - expected).abs() < 1e-9 * expected);
        assert!((sol.alpha[1] - expected).abs() < 1e-9 * expected);
        assert!(sol.rho.abs() < 1e-9);
    }

    #[test]
    fn box_bound_caps_both_multipliers() {
        let x = Matrix::from_rows(&[[0.0], [0.1]]).unwrap();
        let gram = Gram::new(&x, 1.0);
        let idx = [0, 1];
        let sol = solve(
            &mut gram.view(&idx),
            &[1.0, -1.0],
            &[0.5, 0.5],
            &SolverConfig::default(),
        );
        assert_eq!(sol.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let x = Matrix::from_rows(&(0..40).map(|i| [i as f64 * 0.01]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..40)
            .map(|i| if (i / 3) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let gram = Gram::new(&x, 500.0);
        let idx: Vec<usize> = (0..40).collect();
        let cfg = SolverConfig {
            tol: 1e-14,
            max_kernel_evals: 0,
            ..SolverConfig::default()
        };
        let sol = solve(&mut gram.view(&idx), &y, &vec![1e4; 40], &cfg);
        assert!(sol.iterations <= cfg.max_iter(40));
        let dual_sum: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(dual_sum.abs() < 1e-8);
    }
}
