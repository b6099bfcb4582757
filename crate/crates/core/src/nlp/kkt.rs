use serde::Serialize;

use super::{NlpProblem, QcpSolution, SolverSettings};
use crate::scalar::Scalar;

/// Residual breakdown of a candidate solution, in the same scaled measure
/// the solver uses for its stopping test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_norm(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_ineq)
            .max(self.complementarity)
    }
}

/// Recomputes first-order residuals of `solution` against `problem`.
/// Bounds are relaxed exactly as the solver relaxes them.
pub fn kkt_report<T: Scalar, P: NlpProblem<T> + ?Sized>(
    problem: &P,
    solution: &QcpSolution<T>,
    settings: &SolverSettings,
) -> KktReport {
    let n = problem.n_vars();
    let m = problem.n_cons();
    let x: Vec<f64> = solution.x.iter().map(|v| v.as_f64()).collect();
    let xt = &solution.x;
    let scale = solution.obj_scale.as_f64();
    let lam: Vec<f64> = solution.lambda.iter().map(|v| v.as_f64() * scale).collect();
    let zl: Vec<f64> = solution.z_lower.iter().map(|v| v.as_f64() * scale).collect();
    let zu: Vec<f64> = solution.z_upper.iter().map(|v| v.as_f64() * scale).collect();
    let (xl, xu) = problem.var_bounds();
    let (gl, gu) = problem.con_bounds();
    let relax = settings.bound_relax;
    let relaxed = |b: f64, dir: f64| b + dir * relax * b.abs().max(1.0);
    let is_fixed = |lo: f64, hi: f64| lo.is_finite() && hi - lo <= 1e-14 * lo.abs().max(1.0);

    let mut g = vec![T::zero(); m];
    problem.constraints(xt, &mut g);
    let g: Vec<f64> = g.iter().map(|v| v.as_f64()).collect();
    let mut grad = vec![T::zero(); n];
    problem.gradient(xt, &mut grad);
    let structure = problem.jacobian_structure();
    let mut jac = vec![T::zero(); structure.len()];
    problem.jacobian_values(xt, &mut jac);

    let mut r = vec![0.0; n];
    for j in 0..n {
        r[j] = scale * grad[j].as_f64() - zl[j] + zu[j];
    }
    for (k, &(row, col)) in structure.iter().enumerate() {
        r[col] += jac[k].as_f64() * lam[row];
    }

    let mut primal_eq: f64 = 0.0;
    let mut primal_ineq: f64 = 0.0;
    let mut compl: f64 = 0.0;
    let mut z_sum: f64 = 0.0;
    let mut n_bounds = 0usize;
    for j in 0..n {
        let (lo, hi) = (xl[j].as_f64(), xu[j].as_f64());
        if is_fixed(lo, hi) {
            r[j] = 0.0;
            primal_eq = primal_eq.max((x[j] - lo).abs());
            continue;
        }
        if lo.is_finite() {
            let sl = x[j] - relaxed(lo, -1.0);
            primal_ineq = primal_ineq.max(-sl);
            compl = compl.max((sl * zl[j]).abs());
            z_sum += zl[j].abs();
            n_bounds += 1;
        }
        if hi.is_finite() {
            let su = relaxed(hi, 1.0) - x[j];
            primal_ineq = primal_ineq.max(-su);
            compl = compl.max((su * zu[j]).abs());
            z_sum += zu[j].abs();
            n_bounds += 1;
        }
    }
    for i in 0..m {
        let (lo, hi) = (gl[i].as_f64(), gu[i].as_f64());
        if is_fixed(lo, hi) {
            primal_eq = primal_eq.max((g[i] - 0.5 * (lo + hi)).abs());
            continue;
        }
        if lo.is_finite() {
            let sl = g[i] - relaxed(lo, -1.0);
            primal_ineq = primal_ineq.max(-sl);
            if lam[i] < 0.0 {
                compl = compl.max((sl * lam[i]).abs());
            }
            n_bounds += 1;
        }
        if hi.is_finite() {
            let su = relaxed(hi, 1.0) - g[i];
            primal_ineq = primal_ineq.max(-su);
            if lam[i] > 0.0 {
                compl = compl.max((su * lam[i]).abs());
            }
            n_bounds += 1;
        }
        z_sum += lam[i].abs();
    }
    let y_sum: f64 = lam.iter().map(|v| v.abs()).sum();
    let s_max: f64 = 100.0;
    let s_d = s_max.max((y_sum + z_sum) / (m + n_bounds).max(1) as f64) / s_max;
    let s_c = s_max.max(z_sum / n_bounds.max(1) as f64) / s_max;
    let stat = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    KktReport {
        stationarity: stat / s_d,
        primal_eq,
        primal_ineq,
        complementarity: compl / s_c,
    }
}
