//! Primal-dual interior-point solver for smooth nonconvex programs
//!
//! ```text
//!     min f(x)   s.t.  g_l <= g(x) <= g_u,   x_l <= x <= x_u
//! ```
//!
//! Rows with `g_l == g_u` are equalities. The method is a barrier method
//! with a filter line search and inertia-corrected Newton steps; failed or
//! stalled solves fall back to an elastic feasibility problem that decides
//! whether the constraints can be met at all. Only local optimality is ever
//! claimed.

mod elastic;
mod ipm;
mod kkt;

pub use elastic::ElasticProblem;
pub use ipm::solve;
pub use kkt::{kkt_report, KktReport};

use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scalar::Scalar;

/// Smooth nonlinear program with sparse first and second derivatives.
///
/// Jacobian and Hessian structures must be constant and free of duplicate
/// positions; the Hessian structure lists the lower triangle (`row >= col`).
pub trait NlpProblem<T: Scalar>: Sync {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    /// Variable bounds; infinite entries mean unbounded.
    fn var_bounds(&self) -> (Vec<T>, Vec<T>);
    fn con_bounds(&self) -> (Vec<T>, Vec<T>);
    /// Default starting point.
    fn initial_point(&self) -> Vec<T>;
    fn objective(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T], grad: &mut [T]);
    fn constraints(&self, x: &[T], g: &mut [T]);
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[T], vals: &mut [T]);
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * ∇²f + Σ lambda_i ∇²g_i`.
    fn hessian_values(&self, x: &[T], obj_factor: T, lambda: &[T], vals: &mut [T]);

    /// Randomizes a starting point for multi-start runs. The default
    /// leaves the point unchanged.
    fn perturb_start(&self, _x: &mut [T], _rng: &mut ChaCha8Rng, _amplitude: T) {}
}

/// Tunables for [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Scaled optimality-error tolerance.
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Initial barrier parameter when a warm start is supplied.
    pub warm_mu_init: f64,
    /// Minimum relative distance of the starting point from its bounds.
    pub bound_push: f64,
    /// Relative relaxation applied to every finite bound.
    pub bound_relax: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking factor of the line search.
    pub backtrack: f64,
    pub max_soc: usize,
    /// Extra starts from randomly perturbed voltages.
    pub multistart: usize,
    pub multistart_amplitude: f64,
    pub seed: u64,
    /// Constraint violation above which the elastic phase declares the
    /// problem infeasible.
    pub infeasibility_tol: f64,
    pub restoration: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_kkt: 1e-8,
            max_iter: 500,
            mu_init: 0.1,
            warm_mu_init: 1e-3,
            bound_push: 1e-2,
            bound_relax: 1e-9,
            armijo: 1e-8,
            backtrack: 0.5,
            max_soc: 4,
            multistart: 0,
            multistart_amplitude: 0.05,
            seed: 0x5eed,
            infeasibility_tol: 1e-6,
            restoration: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol_kkt > 0.0) {
            return Err("tol_kkt must be positive".into());
        }
        if self.max_iter < 1 {
            return Err("max_iter must be at least 1".into());
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err("backtrack factor must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterLimit,
    NumericFailure,
}

/// Result of one [`solve`] call. Multipliers follow the Lagrangian
/// `f + λᵀg - z_lᵀ(x - x_l) - z_uᵀ(x_u - x)`, so `λ_i > 0` marks an active
/// upper row bound.
#[derive(Debug, Clone, Serialize)]
pub struct QcpSolution<T> {
    pub status: SolveStatus,
    pub x: Vec<T>,
    pub lambda: Vec<T>,
    pub z_lower: Vec<T>,
    pub z_upper: Vec<T>,
    pub objective: T,
    pub kkt_residual: T,
    /// Max constraint violation of `x` (row and variable bounds).
    pub infeasibility: T,
    pub iterations: usize,
    /// Iterations spent in elastic feasibility phases.
    pub restoration_iterations: usize,
    #[serde(skip)]
    pub wall_time: Duration,
    /// Internal objective scaling; multipliers above are unscaled.
    pub obj_scale: T,
    pub message: String,
}

impl<T: Scalar> QcpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub(crate) fn perturb_uniform<T: Scalar>(v: &mut T, rng: &mut ChaCha8Rng, amplitude: T) {
    let u: f64 = rng.gen_range(-1.0..1.0);
    *v += amplitude * T::lit(u);
}
