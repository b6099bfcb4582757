use std::collections::HashMap;
use std::time::Instant;

use log::{debug, trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::elastic::ElasticProblem;
use super::{NlpProblem, QcpSolution, SolveStatus, SolverSettings};
use crate::linalg::{sym_matvec, SparseLdl};
use crate::scalar::{dot, norm_inf, Scalar};

const NONE: usize = usize::MAX;

// barrier and filter constants
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA_SWITCH: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SOC: f64 = 0.99;
const KAPPA_DAMP: f64 = 1e-5;
const STATIC_REG: f64 = 1e-10;
const OBJ_GRAD_TARGET: f64 = 100.0;

/// Solves `problem` from `warm_start` (or the problem's default point) and,
/// when `settings.multistart > 0`, from that many randomized starts,
/// returning the best locally optimal result.
pub fn solve<T: Scalar, P: NlpProblem<T> + ?Sized>(
    problem: &P,
    settings: &SolverSettings,
    warm_start: Option<&[T]>,
) -> QcpSolution<T> {
    let start = Instant::now();
    let x0 = match warm_start {
        Some(w) => w.to_vec(),
        None => problem.initial_point(),
    };
    let mu0 = if warm_start.is_some() {
        settings.warm_mu_init
    } else {
        settings.mu_init
    };
    let mut best = solve_single(problem, settings, x0.clone(), mu0);
    if settings.multistart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        for _ in 0..settings.multistart {
            let mut xs = x0.clone();
            problem.perturb_start(&mut xs, &mut rng, T::lit(settings.multistart_amplitude));
            let cand = solve_single(problem, settings, xs, settings.mu_init);
            let improves = match (cand.is_optimal(), best.is_optimal()) {
                (true, false) => true,
                (true, true) => cand.objective < best.objective,
                _ => false,
            };
            if improves {
                best = cand;
            }
        }
    }
    best.wall_time = start.elapsed();
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    Converged,
    LineSearchFailed,
    IterLimit,
    Numeric,
}

struct Outcome<T> {
    exit: Exit,
    x: Vec<T>,
    y: Vec<T>,
    zl: Vec<T>,
    zu: Vec<T>,
    iterations: usize,
    error: T,
    obj_scale: T,
    message: String,
}

fn solve_single<T: Scalar, P: NlpProblem<T> + ?Sized>(
    problem: &P,
    settings: &SolverSettings,
    x0: Vec<T>,
    mu0: f64,
) -> QcpSolution<T> {
    let n = problem.n_vars();
    let mut engine = Engine::new(problem, settings);
    let mut out = engine.run(x0, mu0);
    let mut iterations = out.iterations;
    let mut restoration_iterations = 0;
    let mut attempts = 0;
    while out.exit != Exit::Converged && settings.restoration && attempts < 2 {
        attempts += 1;
        debug!("main phase ended with {:?}; entering elastic phase", out.exit);
        let elastic = ElasticProblem::new(problem, &out.x);
        let mut el_engine = Engine::new(&elastic, settings);
        let el_out = el_engine.run(elastic.initial_point(), settings.mu_init);
        restoration_iterations += el_out.iterations;
        let x_el = el_out.x[..n].to_vec();
        let viol = engine.max_violation(&x_el);
        if viol > T::lit(settings.infeasibility_tol) {
            let status = if el_out.exit == Exit::Converged {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NumericFailure
            };
            let message = format!(
                "elastic phase ({:?}) left constraint violation {:e}",
                el_out.exit,
                viol.as_f64()
            );
            let elastic_out = Outcome {
                exit: out.exit,
                x: x_el,
                y: vec![T::zero(); problem.n_cons()],
                zl: vec![T::zero(); engine.nw],
                zu: vec![T::zero(); engine.nw],
                iterations,
                error: T::infinity(),
                obj_scale: out.obj_scale,
                message,
            };
            return engine.finish(elastic_out, status, restoration_iterations);
        }
        out = engine.run(x_el, settings.mu_init);
        iterations += out.iterations;
    }
    out.iterations = iterations;
    let status = match out.exit {
        Exit::Converged => SolveStatus::Optimal,
        Exit::IterLimit => SolveStatus::IterLimit,
        Exit::LineSearchFailed | Exit::Numeric => SolveStatus::NumericFailure,
    };
    engine.finish(out, status, restoration_iterations)
}

struct Eval<T> {
    f: T,
    grad: Vec<T>,
    g: Vec<T>,
    jac: Vec<T>,
}

struct Step<T> {
    dw: Vec<T>,
    dy: Vec<T>,
}

struct Engine<'a, T: Scalar, P: ?Sized> {
    p: &'a P,
    s: &'a SolverSettings,
    n: usize,
    m: usize,
    nw: usize,
    xl: Vec<T>,
    xu: Vec<T>,
    gl: Vec<T>,
    gu: Vec<T>,
    fixed: Vec<bool>,
    kkt_of_x: Vec<usize>,
    n_free: usize,
    e_rows: Vec<usize>,
    i_rows: Vec<usize>,
    b_e: Vec<T>,
    wl: Vec<T>,
    wu: Vec<T>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    jac: Vec<(usize, usize)>,
    jac_rows: Vec<Vec<usize>>,
    hess: Vec<(usize, usize)>,
    kkt_entries: Vec<(usize, usize)>,
    hess_slot: Vec<usize>,
    xdiag_slot: Vec<usize>,
    ediag_slot: Vec<usize>,
    je_slot: Vec<usize>,
    ji_pairs: Vec<(usize, usize, usize, usize)>,
    ldl: SparseLdl<T>,
    delta_w_last: T,
}

fn push_into<T: Scalar>(v: T, lo: T, hi: T, push: T) -> T {
    let one = T::one();
    let mut pl = T::zero();
    let mut pu = T::zero();
    if lo.is_finite() {
        pl = push * one.max(lo.abs());
        if hi.is_finite() {
            pl = pl.min(push * (hi - lo));
        }
    }
    if hi.is_finite() {
        pu = push * one.max(hi.abs());
        if lo.is_finite() {
            pu = pu.min(push * (hi - lo));
        }
    }
    let mut out = v;
    if lo.is_finite() && hi.is_finite() && lo + pl > hi - pu {
        return (lo + hi) / T::lit(2.0);
    }
    if lo.is_finite() {
        out = out.max(lo + pl);
    }
    if hi.is_finite() {
        out = out.min(hi - pu);
    }
    out
}

impl<'a, T: Scalar, P: NlpProblem<T> + ?Sized> Engine<'a, T, P> {
    fn new(p: &'a P, s: &'a SolverSettings) -> Self {
        let n = p.n_vars();
        let m = p.n_cons();
        let (xl, xu) = p.var_bounds();
        let (gl, gu) = p.con_bounds();
        assert_eq!(xl.len(), n);
        assert_eq!(gl.len(), m);
        let tiny = T::lit(1e-14);
        let one = T::one();
        let relax = T::lit(s.bound_relax);

        let fixed: Vec<bool> = (0..n)
            .map(|j| xl[j].is_finite() && xu[j] - xl[j] <= tiny * one.max(xl[j].abs()))
            .collect();
        let mut kkt_of_x = vec![NONE; n];
        let mut n_free = 0;
        for j in 0..n {
            if !fixed[j] {
                kkt_of_x[j] = n_free;
                n_free += 1;
            }
        }
        let mut e_rows = Vec::new();
        let mut i_rows = Vec::new();
        let mut b_e = Vec::new();
        for r in 0..m {
            if gl[r].is_finite() && gu[r] - gl[r] <= tiny * one.max(gl[r].abs()) {
                e_rows.push(r);
                b_e.push((gl[r] + gu[r]) / T::lit(2.0));
            } else {
                i_rows.push(r);
            }
        }
        let nw = n + i_rows.len();
        let mut wl = vec![T::neg_infinity(); nw];
        let mut wu = vec![T::infinity(); nw];
        let mut has_l = vec![false; nw];
        let mut has_u = vec![false; nw];
        let mut set_bounds = |j: usize, lo: T, hi: T| {
            if lo.is_finite() {
                wl[j] = lo - relax * one.max(lo.abs());
                has_l[j] = true;
            }
            if hi.is_finite() {
                wu[j] = hi + relax * one.max(hi.abs());
                has_u[j] = true;
            }
        };
        for j in 0..n {
            if !fixed[j] {
                set_bounds(j, xl[j], xu[j]);
            }
        }
        for (i, &r) in i_rows.iter().enumerate() {
            set_bounds(n + i, gl[r], gu[r]);
        }

        let jac = p.jacobian_structure();
        let hess = p.hessian_structure();
        let mut jac_rows = vec![Vec::new(); m];
        for (k, &(r, _)) in jac.iter().enumerate() {
            jac_rows[r].push(k);
        }

        let mut slots: HashMap<(usize, usize), usize> = HashMap::new();
        let mut kkt_entries = Vec::new();
        let mut slot = |a: usize, b: usize| -> usize {
            let key = if a >= b { (a, b) } else { (b, a) };
            *slots.entry(key).or_insert_with(|| {
                kkt_entries.push(key);
                kkt_entries.len() - 1
            })
        };
        let xdiag_slot: Vec<usize> = (0..n)
            .map(|j| {
                if fixed[j] {
                    NONE
                } else {
                    slot(kkt_of_x[j], kkt_of_x[j])
                }
            })
            .collect();
        let hess_slot: Vec<usize> = hess
            .iter()
            .map(|&(r, c)| {
                if fixed[r] || fixed[c] {
                    NONE
                } else {
                    slot(kkt_of_x[r], kkt_of_x[c])
                }
            })
            .collect();
        let mut ji_pairs = Vec::new();
        for (i, &r) in i_rows.iter().enumerate() {
            let entries = &jac_rows[r];
            for (ia, &ka) in entries.iter().enumerate() {
                for &kb in &entries[..=ia] {
                    let (ca, cb) = (jac[ka].1, jac[kb].1);
                    if fixed[ca] || fixed[cb] {
                        continue;
                    }
                    let sl = slot(kkt_of_x[ca], kkt_of_x[cb]);
                    ji_pairs.push((i, ka, kb, sl));
                }
            }
        }
        let mut row_to_e = vec![NONE; m];
        for (e, &r) in e_rows.iter().enumerate() {
            row_to_e[r] = e;
        }
        let ediag_slot: Vec<usize> = (0..e_rows.len())
            .map(|e| slot(n_free + e, n_free + e))
            .collect();
        let je_slot: Vec<usize> = jac
            .iter()
            .map(|&(r, c)| {
                if row_to_e[r] == NONE || fixed[c] {
                    NONE
                } else {
                    slot(n_free + row_to_e[r], kkt_of_x[c])
                }
            })
            .collect();
        let dim = n_free + e_rows.len();
        let class: Vec<u8> = (0..dim).map(|k| u8::from(k >= n_free)).collect();
        let ldl = SparseLdl::analyze(dim, &kkt_entries, &class);

        Engine {
            p,
            s,
            n,
            m,
            nw,
            xl,
            xu,
            gl,
            gu,
            fixed,
            kkt_of_x,
            n_free,
            e_rows,
            i_rows,
            b_e,
            wl,
            wu,
            has_l,
            has_u,
            jac,
            jac_rows,
            hess,
            kkt_entries,
            hess_slot,
            xdiag_slot,
            ediag_slot,
            je_slot,
            ji_pairs,
            ldl,
            delta_w_last: T::zero(),
        }
    }

    fn evaluate(&self, x: &[T], with_derivatives: bool) -> Eval<T> {
        let mut g = vec![T::zero(); self.m];
        self.p.constraints(x, &mut g);
        let mut grad = Vec::new();
        let mut jac = Vec::new();
        if with_derivatives {
            grad = vec![T::zero(); self.n];
            self.p.gradient(x, &mut grad);
            jac = vec![T::zero(); self.jac.len()];
            self.p.jacobian_values(x, &mut jac);
        }
        Eval {
            f: self.p.objective(x),
            grad,
            g,
            jac,
        }
    }

    /// Residual of `g_E(x) - b = 0` and `g_I(x) - s = 0`.
    fn residual(&self, w: &[T], g: &[T]) -> Vec<T> {
        let mut c = vec![T::zero(); self.m];
        for (e, &r) in self.e_rows.iter().enumerate() {
            c[r] = g[r] - self.b_e[e];
        }
        for (i, &r) in self.i_rows.iter().enumerate() {
            c[r] = g[r] - w[self.n + i];
        }
        c
    }

    fn theta(c: &[T]) -> T {
        c.iter().map(|v| v.abs()).sum()
    }

    fn barrier(&self, f_scaled: T, w: &[T], mu: T) -> T {
        let mut phi = f_scaled;
        let damp = T::lit(KAPPA_DAMP) * mu;
        for j in 0..self.nw {
            if self.has_l[j] {
                let sl = w[j] - self.wl[j];
                phi -= mu * sl.ln();
                if !self.has_u[j] {
                    phi += damp * sl;
                }
            }
            if self.has_u[j] {
                let su = self.wu[j] - w[j];
                phi -= mu * su.ln();
                if !self.has_l[j] {
                    phi += damp * su;
                }
            }
        }
        phi
    }

    fn grad_barrier(&self, grad_f: &[T], scale: T, w: &[T], mu: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.nw];
        let damp = T::lit(KAPPA_DAMP) * mu;
        for j in 0..self.n {
            if !self.fixed[j] {
                out[j] = scale * grad_f[j];
            }
        }
        for j in 0..self.nw {
            if self.has_l[j] {
                out[j] -= mu / (w[j] - self.wl[j]);
                if !self.has_u[j] {
                    out[j] += damp;
                }
            }
            if self.has_u[j] {
                out[j] += mu / (self.wu[j] - w[j]);
                if !self.has_l[j] {
                    out[j] -= damp;
                }
            }
        }
        out
    }

    /// `Aᵀy` over the extended primal `w = (x, s)`.
    fn at_y(&self, jac: &[T], y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.nw];
        for (k, &(r, c)) in self.jac.iter().enumerate() {
            if !self.fixed[c] {
                out[c] += jac[k] * y[r];
            }
        }
        for (i, &r) in self.i_rows.iter().enumerate() {
            out[self.n + i] = -y[r];
        }
        out
    }

    /// Scaled optimality error for barrier parameter `mu`.
    #[allow(clippy::too_many_arguments)]
    fn opt_error(
        &self,
        grad_f: &[T],
        scale: T,
        aty: &[T],
        c: &[T],
        w: &[T],
        y: &[T],
        zl: &[T],
        zu: &[T],
        mu: T,
    ) -> T {
        let smax = T::lit(S_MAX);
        let mut n_bounds = 0usize;
        let mut z_sum = T::zero();
        let mut dual = T::zero();
        let mut compl = T::zero();
        for j in 0..self.nw {
            if j < self.n && self.fixed[j] {
                continue;
            }
            let gf = if j < self.n { scale * grad_f[j] } else { T::zero() };
            let r = gf + aty[j] - zl[j] + zu[j];
            dual = dual.max(r.abs());
            // A slack is also measured at its row's actual value and with
            // the row multiplier, so the test holds for the original
            // constraints however the dual residual splits y between them.
            let (wg, yr) = if j < self.n {
                (w[j], T::zero())
            } else {
                (w[j] + c[self.i_rows[j - self.n]], -aty[j])
            };
            if self.has_l[j] {
                n_bounds += 1;
                z_sum += zl[j].abs();
                for (v, z) in [(w[j], zl[j]), (wg, zl[j]), (wg, (-yr).max(T::zero()))] {
                    compl = compl.max(((v - self.wl[j]) * z - mu).abs());
                }
            }
            if self.has_u[j] {
                n_bounds += 1;
                z_sum += zu[j].abs();
                for (v, z) in [(w[j], zu[j]), (wg, zu[j]), (wg, yr.max(T::zero()))] {
                    compl = compl.max(((self.wu[j] - v) * z - mu).abs());
                }
            }
        }
        let y_sum: T = y.iter().map(|v| v.abs()).sum();
        let denom = T::lit((self.m + n_bounds).max(1) as f64);
        let s_d = smax.max((y_sum + z_sum) / denom) / smax;
        let s_c = smax.max(z_sum / T::lit(n_bounds.max(1) as f64)) / smax;
        (dual / s_d).max(norm_inf(c)).max(compl / s_c)
    }

    fn max_violation(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); self.m];
        self.p.constraints(x, &mut g);
        let mut v = T::zero();
        for r in 0..self.m {
            v = v.max(self.gl[r] - g[r]).max(g[r] - self.gu[r]);
        }
        for j in 0..self.n {
            v = v.max(self.xl[j] - x[j]).max(x[j] - self.xu[j]);
        }
        v
    }

    fn assemble(&self, hess: &[T], jac: &[T], sigma: &[T], kdiag: &[T], delta_w: T, delta_c: T) -> Vec<T> {
        let mut vals = vec![T::zero(); self.kkt_entries.len()];
        for (k, &sl) in self.hess_slot.iter().enumerate() {
            if sl != NONE {
                vals[sl] += hess[k];
            }
        }
        for j in 0..self.n {
            let sl = self.xdiag_slot[j];
            if sl != NONE {
                vals[sl] += sigma[j] + delta_w;
            }
        }
        for &(i, ka, kb, sl) in &self.ji_pairs {
            vals[sl] += kdiag[i] * jac[ka] * jac[kb];
        }
        for (k, &sl) in self.je_slot.iter().enumerate() {
            if sl != NONE {
                vals[sl] += jac[k];
            }
        }
        for &sl in &self.ediag_slot {
            vals[sl] -= delta_c;
        }
        vals
    }

    /// Inertia-corrected factorization. Returns the matrix values that the
    /// factor represents (without static regularization) and the
    /// regularization used.
    fn factorize(
        &mut self,
        hess: &[T],
        jac: &[T],
        sigma: &[T],
        mu: T,
    ) -> Option<(Vec<T>, T, T)> {
        let want_pos = self.n_free;
        let want_neg = self.e_rows.len();
        let static_reg = T::lit(STATIC_REG);
        let mut delta_c = T::zero();
        let mut delta_w = T::zero();
        let mut first = true;
        loop {
            let kdiag: Vec<T> = (0..self.i_rows.len())
                .map(|i| {
                    let ds = sigma[self.n + i] + delta_w;
                    ds / (T::one() + delta_c * ds)
                })
                .collect();
            let vals = self.assemble(hess, jac, sigma, &kdiag, delta_w, delta_c);
            let mut fact_vals = vals.clone();
            for &sl in &self.ediag_slot {
                fact_vals[sl] -= static_reg;
            }
            let inertia = self.ldl.factor(&fact_vals);
            let ok = matches!(inertia, Some(i) if i.positive == want_pos && i.negative == want_neg);
            if ok {
                if delta_w > T::zero() {
                    self.delta_w_last = delta_w;
                }
                return Some((vals, delta_w, delta_c));
            }
            if first {
                first = false;
                if inertia.is_none() {
                    delta_c = T::lit(1e-8) * mu.powf(T::lit(0.25));
                }
                delta_w = if self.delta_w_last == T::zero() {
                    T::lit(1e-4)
                } else {
                    T::lit(1e-20).max(self.delta_w_last / T::lit(3.0))
                };
            } else {
                let factor = if self.delta_w_last == T::zero() {
                    T::lit(100.0)
                } else {
                    T::lit(8.0)
                };
                delta_w *= factor;
                if delta_w > T::lit(1e40) {
                    return None;
                }
            }
        }
    }

    fn solve_refined(&self, vals: &[T], rhs: &[T]) -> Vec<T> {
        let mut sol = rhs.to_vec();
        self.ldl.solve(&mut sol);
        let dim = rhs.len();
        let mut res = vec![T::zero(); dim];
        let scale = T::one().max(norm_inf(rhs));
        let mut prev = T::infinity();
        for _ in 0..8 {
            sym_matvec(&self.kkt_entries, vals, &sol, &mut res);
            for k in 0..dim {
                res[k] = rhs[k] - res[k];
            }
            let rn = norm_inf(&res);
            if rn <= T::epsilon() * T::lit(10.0) * scale || rn > prev * T::lit(0.5) {
                break;
            }
            prev = rn;
            self.ldl.solve(&mut res);
            for k in 0..dim {
                sol[k] += res[k];
            }
        }
        sol
    }

    /// Newton step for residuals `rx` (x part of ∇φ + Aᵀy), `rs` (slack
    /// part) and constraint residual `c`.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        vals: &[T],
        jac: &[T],
        sigma: &[T],
        delta_w: T,
        delta_c: T,
        rx: &[T],
        rs: &[T],
        c: &[T],
    ) -> Step<T> {
        let ni = self.i_rows.len();
        let ds: Vec<T> = (0..ni).map(|i| sigma[self.n + i] + delta_w).collect();
        let kd: Vec<T> = ds.iter().map(|d| *d / (T::one() + delta_c * *d)).collect();
        // t_i = K (c_I + r_s / D_s)
        let t: Vec<T> = (0..ni)
            .map(|i| kd[i] * (c[self.i_rows[i]] + rs[i] / ds[i]))
            .collect();
        let dim = self.n_free + self.e_rows.len();
        let mut rhs = vec![T::zero(); dim];
        for j in 0..self.n {
            if !self.fixed[j] {
                rhs[self.kkt_of_x[j]] = -rx[j];
            }
        }
        for (i, &r) in self.i_rows.iter().enumerate() {
            for &k in &self.jac_rows[r] {
                let col = self.jac[k].1;
                if !self.fixed[col] {
                    rhs[self.kkt_of_x[col]] -= jac[k] * t[i];
                }
            }
        }
        for (e, &r) in self.e_rows.iter().enumerate() {
            rhs[self.n_free + e] = -c[r];
        }
        let sol = self.solve_refined(vals, &rhs);
        let mut dw = vec![T::zero(); self.nw];
        let mut dy = vec![T::zero(); self.m];
        for j in 0..self.n {
            if !self.fixed[j] {
                dw[j] = sol[self.kkt_of_x[j]];
            }
        }
        for (e, &r) in self.e_rows.iter().enumerate() {
            dy[r] = sol[self.n_free + e];
        }
        for (i, &r) in self.i_rows.iter().enumerate() {
            let mut jdx = T::zero();
            for &k in &self.jac_rows[r] {
                jdx += jac[k] * dw[self.jac[k].1];
            }
            dy[r] = kd[i] * (jdx + c[r] + rs[i] / ds[i]);
            dw[self.n + i] = (dy[r] - rs[i]) / ds[i];
        }
        Step { dw, dy }
    }

    fn fraction_to_boundary(&self, w: &[T], dw: &[T], tau: T) -> T {
        let mut alpha = T::one();
        for j in 0..self.nw {
            if self.has_l[j] && dw[j] < T::zero() {
                alpha = alpha.min(-tau * (w[j] - self.wl[j]) / dw[j]);
            }
            if self.has_u[j] && dw[j] > T::zero() {
                alpha = alpha.min(tau * (self.wu[j] - w[j]) / dw[j]);
            }
        }
        alpha
    }

    fn run(&mut self, x_start: Vec<T>, mu0: f64) -> Outcome<T> {
        let n = self.n;
        let nw = self.nw;
        let push = T::lit(self.s.bound_push);
        let tol = T::lit(self.s.tol_kkt);
        let mut w = vec![T::zero(); nw];
        for j in 0..n {
            w[j] = if self.fixed[j] {
                self.xl[j]
            } else {
                push_into(x_start[j], self.wl[j], self.wu[j], push)
            };
        }
        let ev0 = self.evaluate(&w[..n], true);
        for (i, &r) in self.i_rows.iter().enumerate() {
            w[n + i] = push_into(ev0.g[r], self.wl[n + i], self.wu[n + i], push);
        }
        let gmax = (0..n)
            .filter(|&j| !self.fixed[j])
            .fold(T::zero(), |a, j| a.max(ev0.grad[j].abs()));
        let scale = if gmax > T::lit(OBJ_GRAD_TARGET) {
            T::lit(OBJ_GRAD_TARGET) / gmax
        } else {
            T::one()
        };
        let mut y = vec![T::zero(); self.m];
        let mut zl: Vec<T> = (0..nw)
            .map(|j| if self.has_l[j] { T::one() } else { T::zero() })
            .collect();
        let mut zu: Vec<T> = (0..nw)
            .map(|j| if self.has_u[j] { T::one() } else { T::zero() })
            .collect();
        let mut mu = T::lit(mu0);
        let mu_min = tol / T::lit(10.0);
        let mut tau = T::lit(TAU_MIN).max(T::one() - mu);
        let mut filter: Vec<(T, T)> = Vec::new();
        let c0 = self.residual(&w, &ev0.g);
        let theta0 = Self::theta(&c0);
        let theta_max = T::lit(1e4) * T::one().max(theta0);
        let theta_min = T::lit(1e-4) * T::one().max(theta0);
        let mut ev = ev0;
        let mut hess_vals = vec![T::zero(); self.hess.len()];
        let mut iter = 0;
        self.delta_w_last = T::zero();

        let make = |exit, w: &[T], y: Vec<T>, zl: Vec<T>, zu: Vec<T>, iter, err, msg: String| Outcome {
            exit,
            x: w[..n].to_vec(),
            y,
            zl,
            zu,
            iterations: iter,
            error: err,
            obj_scale: scale,
            message: msg,
        };

        loop {
            let c = self.residual(&w, &ev.g);
            let aty = self.at_y(&ev.jac, &y);
            let err0 = self.opt_error(&ev.grad, scale, &aty, &c, &w, &y, &zl, &zu, T::zero());
            trace!(
                "iter {iter:3} f={:+.6e} theta={:.3e} err={:.3e} mu={:.1e}",
                ev.f.as_f64(),
                Self::theta(&c).as_f64(),
                err0.as_f64(),
                mu.as_f64()
            );
            if err0 <= tol {
                return make(Exit::Converged, &w, y, zl, zu, iter, err0, String::new());
            }
            // barrier update
            loop {
                let err_mu = self.opt_error(&ev.grad, scale, &aty, &c, &w, &y, &zl, &zu, mu);
                if err_mu > T::lit(KAPPA_EPS) * mu || mu <= mu_min {
                    break;
                }
                mu = mu_min.max((T::lit(KAPPA_MU) * mu).min(mu.powf(T::lit(THETA_MU))));
                tau = T::lit(TAU_MIN).max(T::one() - mu);
                filter.clear();
            }
            if iter >= self.s.max_iter {
                return make(Exit::IterLimit, &w, y, zl, zu, iter, err0, "iteration limit".into());
            }
            iter += 1;

            self.p.hessian_values(&w[..n], scale, &y, &mut hess_vals);
            let mut sigma = vec![T::zero(); nw];
            for j in 0..nw {
                if self.has_l[j] {
                    sigma[j] += zl[j] / (w[j] - self.wl[j]);
                }
                if self.has_u[j] {
                    sigma[j] += zu[j] / (self.wu[j] - w[j]);
                }
            }
            let Some((vals, delta_w, delta_c)) = self.factorize(&hess_vals, &ev.jac, &sigma, mu) else {
                return make(Exit::Numeric, &w, y, zl, zu, iter, err0, "inertia correction failed".into());
            };
            let gphi = self.grad_barrier(&ev.grad, scale, &w, mu);
            let rx: Vec<T> = (0..n).map(|j| gphi[j] + aty[j]).collect();
            let rs: Vec<T> = (0..self.i_rows.len()).map(|i| gphi[n + i] + aty[n + i]).collect();
            let st = self.step(&vals, &ev.jac, &sigma, delta_w, delta_c, &rx, &rs, &c);
            if st.dw.iter().chain(&st.dy).any(|v| !v.is_finite()) {
                return make(Exit::Numeric, &w, y, zl, zu, iter, err0, "non-finite step".into());
            }
            let mut dzl = vec![T::zero(); nw];
            let mut dzu = vec![T::zero(); nw];
            for j in 0..nw {
                if self.has_l[j] {
                    let sl = w[j] - self.wl[j];
                    dzl[j] = mu / sl - zl[j] - zl[j] / sl * st.dw[j];
                }
                if self.has_u[j] {
                    let su = self.wu[j] - w[j];
                    dzu[j] = mu / su - zu[j] + zu[j] / su * st.dw[j];
                }
            }
            let alpha_max = self.fraction_to_boundary(&w, &st.dw, tau);
            let mut alpha_z = T::one();
            for j in 0..nw {
                if self.has_l[j] && dzl[j] < T::zero() {
                    alpha_z = alpha_z.min(-tau * zl[j] / dzl[j]);
                }
                if self.has_u[j] && dzu[j] < T::zero() {
                    alpha_z = alpha_z.min(-tau * zu[j] / dzu[j]);
                }
            }

            // filter line search
            let theta = Self::theta(&c);
            let phi = self.barrier(scale * ev.f, &w, mu);
            let gd = dot(&gphi, &st.dw);
            let tiny_step = (0..nw).all(|j| {
                st.dw[j].abs() <= T::lit(10.0) * T::epsilon() * (T::one() + w[j].abs())
            });
            let gamma_theta = T::lit(GAMMA_THETA);
            let gamma_phi = T::lit(GAMMA_PHI);
            let alpha_min = if gd < T::zero() {
                let a = gamma_theta
                    .min(gamma_phi * theta / (-gd))
                    .min(T::lit(DELTA_SWITCH) * theta.powf(T::lit(S_THETA)) / (-gd).powf(T::lit(S_PHI)));
                T::lit(GAMMA_ALPHA) * a
            } else {
                T::lit(GAMMA_ALPHA) * gamma_theta
            };
            let acceptable = |filter: &[(T, T)], th: T, ph: T| filter.iter().all(|&(ft, fp)| th < ft || ph < fp);

            let mut alpha = alpha_max;
            let mut accepted: Option<(Vec<T>, Eval<T>, bool, T)> = None;
            let mut soc_tried = false;
            if tiny_step {
                let wt: Vec<T> = (0..nw).map(|j| w[j] + alpha * st.dw[j]).collect();
                let evt = self.evaluate(&wt[..n], true);
                accepted = Some((wt, evt, false, alpha));
            }
            while accepted.is_none() {
                let wt: Vec<T> = (0..nw).map(|j| w[j] + alpha * st.dw[j]).collect();
                let evt = self.evaluate(&wt[..n], false);
                let ct = self.residual(&wt, &evt.g);
                let theta_t = Self::theta(&ct);
                let phi_t = self.barrier(scale * evt.f, &wt, mu);
                let switching = gd < T::zero()
                    && alpha * (-gd).powf(T::lit(S_PHI)) > T::lit(DELTA_SWITCH) * theta.powf(T::lit(S_THETA));
                let armijo = phi_t <= phi + T::lit(self.s.armijo) * alpha * gd;
                let mut ok = false;
                let mut f_type = false;
                if theta_t.is_finite() && phi_t.is_finite() && theta_t <= theta_max && acceptable(&filter, theta_t, phi_t) {
                    if theta <= theta_min && switching {
                        ok = armijo;
                        f_type = armijo;
                    } else {
                        ok = theta_t <= (T::one() - gamma_theta) * theta || phi_t <= phi - gamma_phi * theta;
                    }
                }
                if ok {
                    let evt = self.evaluate(&wt[..n], true);
                    accepted = Some((wt, evt, f_type, alpha));
                    break;
                }
                // second-order correction on the first rejected trial
                if !soc_tried && alpha == alpha_max && theta_t >= theta && self.s.max_soc > 0 && theta_t.is_finite() {
                    soc_tried = true;
                    let mut c_soc: Vec<T> = (0..self.m).map(|r| alpha * c[r] + ct[r]).collect();
                    let mut theta_old = theta_t;
                    for _ in 0..self.s.max_soc {
                        let sst = self.step(&vals, &ev.jac, &sigma, delta_w, delta_c, &rx, &rs, &c_soc);
                        let a_soc = self.fraction_to_boundary(&w, &sst.dw, tau);
                        let ws: Vec<T> = (0..nw).map(|j| w[j] + a_soc * sst.dw[j]).collect();
                        let evs = self.evaluate(&ws[..n], false);
                        let cs = self.residual(&ws, &evs.g);
                        let theta_s = Self::theta(&cs);
                        let phi_s = self.barrier(scale * evs.f, &ws, mu);
                        if !(theta_s.is_finite() && phi_s.is_finite()) || theta_s > theta_max || !acceptable(&filter, theta_s, phi_s) {
                            break;
                        }
                        let mut sok = false;
                        let mut sf = false;
                        if theta <= theta_min && switching {
                            if phi_s <= phi + T::lit(self.s.armijo) * alpha * gd {
                                sok = true;
                                sf = true;
                            }
                        } else if theta_s <= (T::one() - gamma_theta) * theta || phi_s <= phi - gamma_phi * theta {
                            sok = true;
                        }
                        if sok {
                            let evs = self.evaluate(&ws[..n], true);
                            // multipliers follow the original direction
                            accepted = Some((ws, evs, sf, alpha));
                            break;
                        }
                        if theta_s > T::lit(KAPPA_SOC) * theta_old {
                            break;
                        }
                        theta_old = theta_s;
                        for r in 0..self.m {
                            c_soc[r] = a_soc * c_soc[r] + cs[r];
                        }
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
                alpha *= T::lit(self.s.backtrack);
                if alpha < alpha_min {
                    return make(
                        Exit::LineSearchFailed,
                        &w,
                        y,
                        zl,
                        zu,
                        iter,
                        err0,
                        format!("line search failed at iteration {iter}"),
                    );
                }
            }
            let (wt, evt, f_type, alpha) = accepted.expect("accepted step");
            if !f_type {
                filter.push(((T::one() - gamma_theta) * theta, phi - gamma_phi * theta));
            }
            w = wt;
            ev = evt;
            for r in 0..self.m {
                y[r] += alpha * st.dy[r];
            }
            let ks = T::lit(KAPPA_SIGMA);
            for j in 0..nw {
                if self.has_l[j] {
                    let sl = w[j] - self.wl[j];
                    let z = zl[j] + alpha_z * dzl[j];
                    zl[j] = z.min(ks * mu / sl).max(mu / (ks * sl));
                }
                if self.has_u[j] {
                    let su = self.wu[j] - w[j];
                    let z = zu[j] + alpha_z * dzu[j];
                    zu[j] = z.min(ks * mu / su).max(mu / (ks * su));
                }
            }
        }
    }

    fn finish(&self, out: Outcome<T>, status: SolveStatus, restoration_iterations: usize) -> QcpSolution<T> {
        let scale = out.obj_scale;
        let x = out.x;
        let objective = self.p.objective(&x);
        let infeasibility = self.max_violation(&x);
        let lambda: Vec<T> = out.y.iter().map(|v| *v / scale).collect();
        let z_lower: Vec<T> = (0..self.n).map(|j| out.zl.get(j).copied().unwrap_or_default() / scale).collect();
        let z_upper: Vec<T> = (0..self.n).map(|j| out.zu.get(j).copied().unwrap_or_default() / scale).collect();
        QcpSolution {
            status,
            x,
            lambda,
            z_lower,
            z_upper,
            objective,
            kkt_residual: out.error,
            infeasibility,
            iterations: out.iterations,
            restoration_iterations,
            wall_time: Default::default(),
            obj_scale: scale,
            message: out.message,
        }
    }
}
