use adnflex::nlp::{kkt_report, solve, NlpProblem, SolveStatus, SolverSettings};

/// min c·x over a box.
struct BoxLp {
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl NlpProblem<f64> for BoxLp {
    fn n_vars(&self) -> usize {
        self.c.len()
    }
    fn n_cons(&self) -> usize {
        0
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![], vec![])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.c.len()]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }
    fn gradient(&self, _x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.c);
    }
    fn constraints(&self, _x: &[f64], _g: &mut [f64]) {}
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        vec![]
    }
    fn jacobian_values(&self, _x: &[f64], _v: &mut [f64]) {}
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![]
    }
    fn hessian_values(&self, _x: &[f64], _o: f64, _l: &[f64], _v: &mut [f64]) {}
}

/// The classic four-variable test problem with one product inequality
/// and one sphere equality.
struct Hs071;

impl NlpProblem<f64> for Hs071 {
    fn n_vars(&self) -> usize {
        4
    }
    fn n_cons(&self) -> usize {
        2
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0; 4], vec![5.0; 4])
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![25.0, 40.0], vec![f64::INFINITY, 40.0])
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![1.0, 5.0, 5.0, 1.0]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
        g[1] = x[0] * x[3];
        g[2] = x[0] * x[3] + 1.0;
        g[3] = x[0] * (x[0] + x[1] + x[2]);
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[0] * x[1] * x[2] * x[3];
        g[1] = x.iter().map(|v| v * v).sum();
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (0..2).flat_map(|r| (0..4).map(move |c| (r, c))).collect()
    }
    fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
        v[0] = x[1] * x[2] * x[3];
        v[1] = x[0] * x[2] * x[3];
        v[2] = x[0] * x[1] * x[3];
        v[3] = x[0] * x[1] * x[2];
        for j in 0..4 {
            v[4 + j] = 2.0 * x[j];
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (0..4).flat_map(|r| (0..=r).map(move |c| (r, c))).collect()
    }
    fn hessian_values(&self, x: &[f64], o: f64, l: &[f64], v: &mut [f64]) {
        // (0,0) (1,0) (1,1) (2,0) (2,1) (2,2) (3,0) (3,1) (3,2) (3,3)
        v[0] = o * 2.0 * x[3] + 2.0 * l[1];
        v[1] = o * x[3] + l[0] * x[2] * x[3];
        v[2] = 2.0 * l[1];
        v[3] = o * x[3] + l[0] * x[1] * x[3];
        v[4] = l[0] * x[0] * x[3];
        v[5] = 2.0 * l[1];
        v[6] = o * (2.0 * x[0] + x[1] + x[2]) + l[0] * x[1] * x[2];
        v[7] = o * x[0] + l[0] * x[0] * x[2];
        v[8] = o * x[0] + l[0] * x[0] * x[1];
        v[9] = 2.0 * l[1];
    }
}

/// Distance from `target` to the disc `x² + y² <= r²`, optionally with
/// the half-plane `x + y >= h`.
struct Disc {
    target: [f64; 2],
    r: f64,
    h: Option<f64>,
}

impl NlpProblem<f64> for Disc {
    fn n_vars(&self) -> usize {
        2
    }
    fn n_cons(&self) -> usize {
        1 + usize::from(self.h.is_some())
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
    }
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::NEG_INFINITY];
        let mut hi = vec![self.r * self.r];
        if let Some(h) = self.h {
            lo.push(h);
            hi.push(f64::INFINITY);
        }
        (lo, hi)
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] - self.target[0]).powi(2) + (x[1] - self.target[1]).powi(2)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 2.0 * (x[0] - self.target[0]);
        g[1] = 2.0 * (x[1] - self.target[1]);
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[0] * x[0] + x[1] * x[1];
        if self.h.is_some() {
            g[1] = x[0] + x[1];
        }
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(0, 0), (0, 1)];
        if self.h.is_some() {
            s.extend([(1, 0), (1, 1)]);
        }
        s
    }
    fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
        v[0] = 2.0 * x[0];
        v[1] = 2.0 * x[1];
        if self.h.is_some() {
            v[2] = 1.0;
            v[3] = 1.0;
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![(0, 0), (1, 1)]
    }
    fn hessian_values(&self, _x: &[f64], o: f64, l: &[f64], v: &mut [f64]) {
        v[0] = 2.0 * o + 2.0 * l[0];
        v[1] = 2.0 * o + 2.0 * l[0];
    }
}

#[test]
fn box_lp_hits_the_cheap_corner() {
    let p = BoxLp {
        c: vec![1.0, -2.0, 0.5, -0.1],
        lo: vec![-1.0, 0.0, 2.0, -3.0],
        hi: vec![1.0, 4.0, 5.0, 3.0],
    };
    let settings = SolverSettings::default();
    let sol = solve(&p, &settings, None);
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    let expect = [-1.0, 4.0, 2.0, 3.0];
    for (x, e) in sol.x.iter().zip(expect) {
        assert!((x - e).abs() < 1e-6, "{x} vs {e}");
    }
    assert!((sol.objective - (-1.0 - 8.0 + 1.0 - 0.3)).abs() < 1e-6);
    let rep = kkt_report(&p, &sol, &settings);
    assert!(rep.max_norm() <= settings.tol_kkt, "{rep:?}");
}

#[test]
fn hs071_reaches_known_optimum() {
    let settings = SolverSettings::default();
    let sol = solve(&Hs071, &settings, None);
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    assert!((sol.objective - 17.014_017_29).abs() < 1e-6, "{}", sol.objective);
    let expect = [1.0, 4.742_999_64, 3.821_149_98, 1.379_408_29];
    for (x, e) in sol.x.iter().zip(expect) {
        assert!((x - e).abs() < 1e-5, "{x} vs {e}");
    }
    let rep = kkt_report(&Hs071, &sol, &settings);
    assert!(rep.max_norm() <= settings.tol_kkt, "{rep:?}");
    assert!(sol.iterations < 40, "{} iterations", sol.iterations);
}

#[test]
fn projection_onto_disc() {
    let p = Disc {
        target: [3.0, 4.0],
        r: 1.0,
        h: None,
    };
    let settings = SolverSettings::default();
    let sol = solve(&p, &settings, None);
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    assert!((sol.x[0] - 0.6).abs() < 1e-7 && (sol.x[1] - 0.8).abs() < 1e-7);
    // multiplier of the disc row: 2(x - t) + 2λx = 0 → λ = 4
    assert!((sol.lambda[0] - 4.0).abs() < 1e-6, "{}", sol.lambda[0]);
}

#[test]
fn disjoint_constraints_are_infeasible() {
    let p = Disc {
        target: [0.0, 0.0],
        r: 1.0,
        h: Some(3.0),
    };
    let sol = solve(&p, &SolverSettings::default(), None);
    assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
    assert!(sol.infeasibility > 1e-3);
}

#[test]
fn perturbed_primal_breaks_feasibility() {
    let settings = SolverSettings::default();
    let mut sol = solve(&Hs071, &settings, None);
    sol.x[1] += 1e-3;
    let rep = kkt_report(&Hs071, &sol, &settings);
    assert!(rep.primal_eq > 1e-4, "{rep:?}");
}

#[test]
fn solves_are_deterministic() {
    let settings = SolverSettings {
        multistart: 3,
        ..SolverSettings::default()
    };
    let a = solve(&Hs071, &settings, None);
    let b = solve(&Hs071, &settings, None);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}
