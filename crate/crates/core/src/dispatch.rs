//! Least-cost dispatch of flexible units for a pinned interface setpoint,
//! grid sweeps of that dispatch ("cost maps"), and comparison of maps
//! between configurations.

use rayon::prelude::*;
use serde::Serialize;

use crate::acropf::{build_problem, ObjectiveSpec, TargetPoint};
use crate::boundary::{FlexibilityBoundary, BINDING_TOL};
use crate::config::Configuration;
use crate::error::{FlexError, Result};
use crate::network::{FlexUnit, NetworkCase};
use crate::nlp::{self, SolveStatus, SolverSettings};
use crate::oracle::OperatingPoint;
use crate::scalar::Scalar;

/// Cost differences below this ($/h) count as ties.
pub const COST_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct DispatchPoint<T> {
    pub target: TargetPoint<T>,
    /// `(p_up, p_dn, q_up, q_dn)` per unit, MW / MVAr; zero when infeasible.
    pub regulations: Vec<[T; 4]>,
    /// $/h.
    pub total_cost: T,
    pub feasible: bool,
    pub status: SolveStatus,
    pub binding: Vec<String>,
    pub iterations: usize,
    pub point: Option<OperatingPoint<T>>,
    /// Raw solver vector, kept for warm starts.
    #[serde(skip)]
    pub x: Vec<T>,
}

impl<T: Scalar> DispatchPoint<T> {
    fn infeasible(target: TargetPoint<T>, n_units: usize, status: SolveStatus, iterations: usize) -> Self {
        DispatchPoint {
            target,
            regulations: vec![[T::zero(); 4]; n_units],
            total_cost: T::zero(),
            feasible: false,
            status,
            binding: vec![],
            iterations,
            point: None,
            x: vec![],
        }
    }
}

/// Linear regulation cost of the given activations, $/h.
pub fn regulation_cost<T: Scalar>(units: &[FlexUnit<T>], regs: &[[T; 4]]) -> T {
    units.iter().zip(regs).fold(T::zero(), |acc, (u, r)| {
        acc + u.cost_p * (r[0] + r[1]) + u.cost_q * (r[2] + r[3])
    })
}

/// Solves the least-cost problem for one interface target.
///
/// `Infeasible` is a regular answer (zero regulations); a solve that
/// neither converges nor proves infeasibility is an error carrying the
/// target coordinates.
pub fn min_cost_dispatch<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    target: TargetPoint<T>,
    warm_start: Option<&[T]>,
    settings: &SolverSettings,
) -> Result<DispatchPoint<T>> {
    let problem = build_problem(case, config, ObjectiveSpec::MinCost { target })?;
    let n_units = case.flex_units.len();
    let mut sol = nlp::solve(&problem, settings, warm_start);
    let mut iterations = sol.iterations;
    if !sol.is_optimal() && warm_start.is_some() {
        // a warm start can sit in the wrong basin; confirm from scratch
        let cold = nlp::solve(&problem, settings, None);
        iterations += cold.iterations;
        if cold.is_optimal() || sol.status != SolveStatus::Infeasible {
            sol = cold;
        }
    }
    // Targets at the idle point pin a zero-cost optimum onto the regulation
    // bounds, which is degenerate; a different barrier start usually gets
    // through, and random restarts are the last resort.
    let ladder = [
        SolverSettings { mu_init: 1e-2, ..settings.clone() },
        SolverSettings { mu_init: 1.0, ..settings.clone() },
        SolverSettings { multistart: settings.multistart.max(3), ..settings.clone() },
    ];
    for retry in &ladder {
        if !matches!(sol.status, SolveStatus::IterLimit | SolveStatus::NumericFailure) {
            break;
        }
        let again = nlp::solve(&problem, retry, None);
        iterations += again.iterations;
        sol = again;
    }
    match sol.status {
        SolveStatus::Optimal => {
            // interior-point iterates sit a hair outside [0, cap]
            let regulations: Vec<[T; 4]> = problem
                .flex_mw(&sol.x)
                .into_iter()
                .zip(&case.flex_units)
                .map(|(r, u)| {
                    let caps = [u.p_up_max, u.p_dn_max, u.q_up_max, u.q_dn_max];
                    std::array::from_fn(|k| r[k].max(T::zero()).min(caps[k]))
                })
                .collect();
            Ok(DispatchPoint {
                target,
                total_cost: regulation_cost(&case.flex_units, &regulations),
                regulations,
                feasible: true,
                status: sol.status,
                binding: problem.binding_constraints(&sol.x, T::lit(BINDING_TOL)),
                iterations,
                point: Some(problem.operating_point(&sol.x)),
                x: sol.x,
            })
        }
        SolveStatus::Infeasible => Ok(DispatchPoint::infeasible(target, n_units, sol.status, iterations)),
        _ => Err(FlexError::NumericFailure {
            p_mw: target.p_ref.as_f64(),
            q_mvar: target.q_ref.as_f64(),
            details: format!("{:?}: {}", sol.status, sol.message),
        }),
    }
}

/// Regular P–Q grid: `p_min + i·step` for `i < n_p`, likewise for Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub p_min: f64,
    pub q_min: f64,
    pub step: f64,
    pub n_p: usize,
    pub n_q: usize,
}

impl GridSpec {
    /// Grid over `[p_min, p_max] × [q_min, q_max]`; the last node of each
    /// axis is the largest one not beyond the maximum.
    pub fn new(p_min: f64, p_max: f64, q_min: f64, q_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(FlexError::InvalidGrid("step must be positive".into()));
        }
        let finite = [p_min, p_max, q_min, q_max].iter().all(|v| v.is_finite());
        if !finite || p_max < p_min || q_max < q_min {
            return Err(FlexError::InvalidGrid("P and Q ranges must be finite and nonempty".into()));
        }
        let count = |lo: f64, hi: f64| ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok(GridSpec {
            p_min,
            q_min,
            step,
            n_p: count(p_min, p_max),
            n_q: count(q_min, q_max),
        })
    }

    /// Grid covering the bounding box of `boundaries` expanded by one step,
    /// aligned so that `anchor` (typically a base point) is a node.
    pub fn covering<T: Scalar>(
        boundaries: &[&FlexibilityBoundary<T>],
        anchor: (f64, f64),
        step: f64,
    ) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(FlexError::InvalidGrid("no boundary to cover".into()));
        }
        let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for b in boundaries {
            let (a, c, d, e) = b.bounding_box();
            bb = (
                bb.0.min(a.as_f64()),
                bb.1.max(c.as_f64()),
                bb.2.min(d.as_f64()),
                bb.3.max(e.as_f64()),
            );
        }
        Self::aligned(anchor, (bb.0 - step, bb.1 + step, bb.2 - step, bb.3 + step), step)
    }

    /// Smallest grid through `anchor` whose nodes cover `bbox`
    /// = `(p_min, p_max, q_min, q_max)`.
    pub fn aligned(anchor: (f64, f64), bbox: (f64, f64, f64, f64), step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(FlexError::InvalidGrid("step must be positive".into()));
        }
        let below = |a: f64, lo: f64| ((a - lo) / step - 1e-9).ceil().max(0.0);
        let above = |a: f64, hi: f64| ((hi - a) / step - 1e-9).ceil().max(0.0);
        let (ip0, ip1) = (below(anchor.0, bbox.0), above(anchor.0, bbox.1));
        let (iq0, iq1) = (below(anchor.1, bbox.2), above(anchor.1, bbox.3));
        Ok(GridSpec {
            p_min: anchor.0 - ip0 * step,
            q_min: anchor.1 - iq0 * step,
            step,
            n_p: (ip0 + ip1) as usize + 1,
            n_q: (iq0 + iq1) as usize + 1,
        })
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p_min + i as f64 * self.step
    }

    pub fn q(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.n_p * self.n_q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node nearest to `(p, q)`, clamped into the grid.
    pub fn nearest(&self, p: f64, q: f64) -> (usize, usize) {
        let snap = |v: f64, lo: f64, n: usize| {
            (((v - lo) / self.step).round().max(0.0) as usize).min(n - 1)
        };
        (snap(p, self.p_min, self.n_p), snap(q, self.q_min, self.n_q))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeFailure {
    pub i: usize,
    pub j: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub details: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostSurface<T> {
    pub config_label: String,
    pub grid: GridSpec,
    /// Row-major over Q then P: node `(i, j)` sits at index `j·n_p + i`.
    pub nodes: Vec<DispatchPoint<T>>,
    /// Nodes whose solve failed numerically; they appear in `nodes` as
    /// infeasible with status `NumericFailure`.
    pub failures: Vec<NodeFailure>,
}

impl<T: Scalar> CostSurface<T> {
    pub fn node(&self, i: usize, j: usize) -> &DispatchPoint<T> {
        &self.nodes[j * self.grid.n_p + i]
    }

    pub fn feasible_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.feasible).count()
    }
}

/// Sweeps [`min_cost_dispatch`] over `grid`.
///
/// Order: the column through the node nearest `origin` is solved first,
/// outward from `origin`; then every row outward from that column. Each
/// node is warm-started from the last feasible node on its own chain, so
/// results do not depend on thread scheduling; rows run in parallel.
pub fn cost_map<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    grid: GridSpec,
    origin: (f64, f64),
    settings: &SolverSettings,
) -> Result<CostSurface<T>> {
    if !(grid.step > 0.0 && grid.step.is_finite()) || grid.is_empty() {
        return Err(FlexError::InvalidGrid("step must be positive and the grid nonempty".into()));
    }
    let (ib, jb) = grid.nearest(origin.0, origin.1);
    let solve = |i: usize, j: usize, warm: Option<&[T]>| -> Result<std::result::Result<DispatchPoint<T>, NodeFailure>> {
        let target = TargetPoint::new(T::lit(grid.p(i)), T::lit(grid.q(j)))?;
        match min_cost_dispatch(case, config, target, warm, settings) {
            Ok(d) => Ok(Ok(d)),
            Err(FlexError::NumericFailure { p_mw, q_mvar, details }) => Ok(Err(NodeFailure {
                i,
                j,
                p_mw,
                q_mvar,
                details,
            })),
            Err(e) => Err(e),
        }
    };
    // outward chain along one axis, starting at `start` with `seed`
    let chain = |order: Vec<(usize, usize)>, seed: Option<Vec<T>>| -> Result<Vec<(usize, usize, std::result::Result<DispatchPoint<T>, NodeFailure>)>> {
        let mut out = Vec::with_capacity(order.len());
        let mut warm = seed;
        for (i, j) in order {
            let r = solve(i, j, warm.as_deref())?;
            if let Ok(d) = &r {
                if d.feasible {
                    warm = Some(d.x.clone());
                }
            }
            out.push((i, j, r));
        }
        Ok(out)
    };
    let outward = |centre: usize, n: usize| -> (Vec<usize>, Vec<usize>) {
        ((centre..n).collect(), (0..centre).rev().collect())
    };

    // spine column
    let (up, down) = outward(jb, grid.n_q);
    let mut spine = chain(up.iter().map(|&j| (ib, j)).collect(), None)?;
    let seed_down = spine
        .iter()
        .find_map(|(_, _, r)| r.as_ref().ok().filter(|d| d.feasible).map(|d| d.x.clone()));
    spine.extend(chain(down.iter().map(|&j| (ib, j)).collect(), seed_down)?);
    let mut spine_x: Vec<Option<Vec<T>>> = vec![None; grid.n_q];
    let mut results: Vec<Option<std::result::Result<DispatchPoint<T>, NodeFailure>>> =
        (0..grid.len()).map(|_| None).collect();
    for (i, j, r) in spine {
        if let Ok(d) = &r {
            if d.feasible {
                spine_x[j] = Some(d.x.clone());
            }
        }
        results[j * grid.n_p + i] = Some(r);
    }

    let rows: Vec<Vec<(usize, usize, std::result::Result<DispatchPoint<T>, NodeFailure>)>> = (0..grid.n_q)
        .into_par_iter()
        .map(|j| {
            let (right, left) = outward(ib, grid.n_p);
            let mut row = chain(right.into_iter().skip(1).map(|i| (i, j)).collect(), spine_x[j].clone())?;
            row.extend(chain(left.into_iter().map(|i| (i, j)).collect(), spine_x[j].clone())?);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    for (i, j, r) in rows.into_iter().flatten() {
        results[j * grid.n_p + i] = Some(r);
    }

    let n_units = case.flex_units.len();
    let mut failures = Vec::new();
    let nodes = results
        .into_iter()
        .enumerate()
        .map(|(k, r)| match r.expect("every node visited") {
            Ok(d) => d,
            Err(f) => {
                let (i, j) = (k % grid.n_p, k / grid.n_p);
                let target = TargetPoint::new(T::lit(grid.p(i)), T::lit(grid.q(j))).expect("finite grid");
                failures.push(f);
                DispatchPoint::infeasible(target, n_units, SolveStatus::NumericFailure, 0)
            }
        })
        .collect();
    Ok(CostSurface {
        config_label: config.label.clone(),
        grid,
        nodes,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeDelta {
    pub i: usize,
    pub j: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub feasible_a: bool,
    pub feasible_b: bool,
    /// `cost_a − cost_b` in $/h where both are feasible.
    pub savings: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceComparison {
    pub label_a: String,
    pub label_b: String,
    pub nodes: Vec<NodeDelta>,
    pub common_feasible: usize,
    pub max_savings: f64,
    pub min_savings: f64,
    pub mean_savings: f64,
    /// Nodes where `b` is cheaper by more than [`COST_TOL`].
    pub cheaper_in_b: usize,
    /// Nodes where `b` is dearer by more than [`COST_TOL`].
    pub dearer_in_b: usize,
    /// Infeasible in `a`, feasible in `b`.
    pub gained: usize,
    /// Feasible in `a`, infeasible in `b`.
    pub lost: usize,
    /// `gained · step²`, MVA².
    pub area_gained: f64,
}

/// Node-by-node difference of two surfaces on the same grid.
pub fn compare_surfaces<T: Scalar>(a: &CostSurface<T>, b: &CostSurface<T>) -> Result<SurfaceComparison> {
    if a.grid != b.grid {
        return Err(FlexError::GridMismatch(format!(
            "{} uses {:?}, {} uses {:?}",
            a.config_label, a.grid, b.config_label, b.grid
        )));
    }
    let g = a.grid;
    let mut nodes = Vec::with_capacity(g.len());
    let (mut n, mut sum) = (0usize, 0.0f64);
    let (mut max_s, mut min_s) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut cheaper, mut dearer, mut gained, mut lost) = (0, 0, 0, 0);
    for j in 0..g.n_q {
        for i in 0..g.n_p {
            let (na, nb) = (a.node(i, j), b.node(i, j));
            let savings = (na.feasible && nb.feasible)
                .then(|| na.total_cost.as_f64() - nb.total_cost.as_f64());
            if let Some(s) = savings {
                n += 1;
                sum += s;
                max_s = max_s.max(s);
                min_s = min_s.min(s);
                if s > COST_TOL {
                    cheaper += 1;
                } else if s < -COST_TOL {
                    dearer += 1;
                }
            }
            gained += usize::from(!na.feasible && nb.feasible);
            lost += usize::from(na.feasible && !nb.feasible);
            nodes.push(NodeDelta {
                i,
                j,
                p_mw: g.p(i),
                q_mvar: g.q(j),
                feasible_a: na.feasible,
                feasible_b: nb.feasible,
                savings,
            });
        }
    }
    Ok(SurfaceComparison {
        label_a: a.config_label.clone(),
        label_b: b.config_label.clone(),
        nodes,
        common_feasible: n,
        max_savings: if n > 0 { max_s } else { 0.0 },
        min_savings: if n > 0 { min_s } else { 0.0 },
        mean_savings: if n > 0 { sum / n as f64 } else { 0.0 },
        cheaper_in_b: cheaper,
        dearer_in_b: dearer,
        gained,
        lost,
        area_gained: gained as f64 * g.step * g.step,
    })
}

/// Merit-order allocation ignoring the network: the interface change
/// `(dp, dq)` (MW / MVAr, positive = more consumption) is covered by the
/// cheapest units first, P and Q independently. Returns the cost and the
/// activations, or `None` when capacity runs out.
pub fn greedy_dispatch<T: Scalar>(units: &[FlexUnit<T>], dp: T, dq: T) -> Option<(T, Vec<[T; 4]>)> {
    let mut regs = vec![[T::zero(); 4]; units.len()];
    let mut cost = T::zero();
    for (amount, is_p) in [(dp, true), (dq, false)] {
        // consumption at the interface means units consume (the "down" slot)
        let slot = match (is_p, amount > T::zero()) {
            (true, true) => 1,
            (true, false) => 0,
            (false, true) => 3,
            (false, false) => 2,
        };
        let mut order: Vec<usize> = (0..units.len()).collect();
        let price = |u: &FlexUnit<T>| if is_p { u.cost_p } else { u.cost_q };
        order.sort_by(|&a, &b| {
            price(&units[a])
                .partial_cmp(&price(&units[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut left = amount.abs();
        for k in order {
            if left <= T::zero() {
                break;
            }
            let u = &units[k];
            let cap = [u.p_up_max, u.p_dn_max, u.q_up_max, u.q_dn_max][slot];
            let take = left.min(cap);
            regs[k][slot] = take;
            cost += take * price(u);
            left -= take;
        }
        if left > T::lit(1e-12) {
            return None;
        }
    }
    Some((cost, regs))
}
