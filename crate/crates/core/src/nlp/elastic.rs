use super::NlpProblem;
use crate::scalar::Scalar;

const PROXIMITY: f64 = 1e-6;
const START_SLACK: f64 = 1e-2;

/// Elastic relaxation of an [`NlpProblem`]: every row `g_i(x)` becomes
/// `g_i(x) - p_i + n_i` with `p, n >= 0`, and the objective is the total
/// violation `Σ(p + n)` plus a small proximity term towards a reference
/// point. A zero optimum certifies a feasible point; a positive one is a
/// (local) proof of infeasibility.
pub struct ElasticProblem<'a, T, P: ?Sized> {
    inner: &'a P,
    reference: Vec<T>,
    weights: Vec<T>,
    n: usize,
    m: usize,
    inner_hess: Vec<(usize, usize)>,
    /// Extra diagonal entries for variables the inner Hessian lacks.
    extra_diag: Vec<usize>,
    /// Hessian slot of each variable's diagonal.
    diag_slot: Vec<usize>,
}

impl<'a, T: Scalar, P: NlpProblem<T> + ?Sized> ElasticProblem<'a, T, P> {
    pub fn new(inner: &'a P, reference: &[T]) -> Self {
        let n = inner.n_vars();
        let m = inner.n_cons();
        let (xl, xu) = inner.var_bounds();
        let reference: Vec<T> = reference
            .iter()
            .enumerate()
            .map(|(j, v)| v.max(xl[j]).min(xu[j]))
            .collect();
        let weights = reference.iter().map(|v| T::one().min(T::one() / v.abs())).collect();
        let inner_hess = inner.hessian_structure();
        let mut diag_slot = vec![usize::MAX; n];
        for (k, &(r, c)) in inner_hess.iter().enumerate() {
            if r == c {
                diag_slot[r] = k;
            }
        }
        let mut extra_diag = Vec::new();
        for j in 0..n {
            if diag_slot[j] == usize::MAX {
                diag_slot[j] = inner_hess.len() + extra_diag.len();
                extra_diag.push(j);
            }
        }
        ElasticProblem {
            inner,
            reference,
            weights,
            n,
            m,
            inner_hess,
            extra_diag,
            diag_slot,
        }
    }

    /// Sum of elastic variables at `x`.
    pub fn total_violation(&self, x: &[T]) -> T {
        x[self.n..].iter().copied().sum()
    }
}

impl<'a, T: Scalar, P: NlpProblem<T> + ?Sized> NlpProblem<T> for ElasticProblem<'a, T, P> {
    fn n_vars(&self) -> usize {
        self.n + 2 * self.m
    }

    fn n_cons(&self) -> usize {
        self.m
    }

    fn var_bounds(&self) -> (Vec<T>, Vec<T>) {
        let (mut lo, mut hi) = self.inner.var_bounds();
        lo.extend(std::iter::repeat(T::zero()).take(2 * self.m));
        hi.extend(std::iter::repeat(T::infinity()).take(2 * self.m));
        (lo, hi)
    }

    fn con_bounds(&self) -> (Vec<T>, Vec<T>) {
        self.inner.con_bounds()
    }

    fn initial_point(&self) -> Vec<T> {
        let mut g = vec![T::zero(); self.m];
        self.inner.constraints(&self.reference, &mut g);
        let (gl, gu) = self.inner.con_bounds();
        let eps = T::lit(START_SLACK);
        let mut x = self.reference.clone();
        x.extend((0..self.m).map(|i| (g[i] - gu[i]).max(T::zero()) + eps));
        x.extend((0..self.m).map(|i| (gl[i] - g[i]).max(T::zero()) + eps));
        x
    }

    fn objective(&self, x: &[T]) -> T {
        let zeta = T::lit(PROXIMITY);
        let prox: T = (0..self.n)
            .map(|j| {
                let d = x[j] - self.reference[j];
                self.weights[j] * d * d
            })
            .sum();
        self.total_violation(x) + zeta / T::lit(2.0) * prox
    }

    fn gradient(&self, x: &[T], grad: &mut [T]) {
        let zeta = T::lit(PROXIMITY);
        for j in 0..self.n {
            grad[j] = zeta * self.weights[j] * (x[j] - self.reference[j]);
        }
        for v in &mut grad[self.n..] {
            *v = T::one();
        }
    }

    fn constraints(&self, x: &[T], g: &mut [T]) {
        self.inner.constraints(&x[..self.n], g);
        for i in 0..self.m {
            g[i] += x[self.n + self.m + i] - x[self.n + i];
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.jacobian_structure();
        for i in 0..self.m {
            s.push((i, self.n + i));
            s.push((i, self.n + self.m + i));
        }
        s
    }

    fn jacobian_values(&self, x: &[T], vals: &mut [T]) {
        let k = vals.len() - 2 * self.m;
        self.inner.jacobian_values(&x[..self.n], &mut vals[..k]);
        for i in 0..self.m {
            vals[k + 2 * i] = -T::one();
            vals[k + 2 * i + 1] = T::one();
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner_hess.clone();
        s.extend(self.extra_diag.iter().map(|&j| (j, j)));
        s
    }

    fn hessian_values(&self, x: &[T], obj_factor: T, lambda: &[T], vals: &mut [T]) {
        let k = self.inner_hess.len();
        self.inner.hessian_values(&x[..self.n], T::zero(), lambda, &mut vals[..k]);
        for v in &mut vals[k..] {
            *v = T::zero();
        }
        let zeta = T::lit(PROXIMITY);
        for j in 0..self.n {
            vals[self.diag_slot[j]] += obj_factor * zeta * self.weights[j];
        }
    }
}
