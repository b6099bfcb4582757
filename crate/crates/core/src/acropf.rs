//! AC optimal power flow in rectangular voltage coordinates.
//!
//! Variables per bus are the real and imaginary voltage parts `e`, `f`;
//! every in-service line carries four directed-flow variables defined by
//! quadratic equalities, so all constraints are polynomials of degree two
//! and the Lagrangian Hessian has a constant sparsity pattern.

use std::collections::HashMap;
use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{effective_topology, is_connected, Configuration};
use crate::error::{FlexError, Result};
use crate::network::{line_admittance, NetworkCase};
use crate::nlp::{perturb_uniform, NlpProblem};
use crate::oracle::OperatingPoint;
use crate::scalar::Scalar;

/// Active and reactive flow from `i` to `j` over a series admittance
/// `G + jB`, all quantities in p.u.
pub fn branch_flow<T: Scalar>(e_i: T, f_i: T, e_j: T, f_j: T, g: T, b: T) -> (T, T) {
    let vi2 = e_i * e_i + f_i * f_i;
    let re = e_i * e_j + f_i * f_j;
    let im = f_i * e_j - e_i * f_j;
    (vi2 * g - re * g - im * b, -vi2 * b + re * b - im * g)
}

/// Partial derivatives of [`branch_flow`] with respect to
/// `(e_i, f_i, e_j, f_j)`.
fn branch_flow_grad<T: Scalar>(e_i: T, f_i: T, e_j: T, f_j: T, g: T, b: T) -> ([T; 4], [T; 4]) {
    let two = T::lit(2.0);
    let dp = [
        two * g * e_i - g * e_j + b * f_j,
        two * g * f_i - g * f_j - b * e_j,
        -g * e_i - b * f_i,
        -g * f_i + b * e_i,
    ];
    let dq = [
        -two * b * e_i + b * e_j + g * f_j,
        -two * b * f_i + b * f_j - g * e_j,
        b * e_i - g * f_i,
        b * f_i + g * e_i,
    ];
    (dp, dq)
}

/// Index map of the decision vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableLayout {
    pub e: Range<usize>,
    pub f: Range<usize>,
    /// Four slots per in-service line: `p_ij, q_ij, p_ji, q_ji`.
    pub flows: Range<usize>,
    /// Two slots per generator: `p, q`.
    pub gens: Range<usize>,
    /// Four slots per flexible unit: `p_up, p_dn, q_up, q_dn`.
    pub flex: Range<usize>,
    /// Case line index of each in-service line, in flow-slot order.
    pub lines: Vec<usize>,
}

impl VariableLayout {
    pub fn n_vars(&self) -> usize {
        self.flex.end
    }
    pub fn n_bus(&self) -> usize {
        self.e.len()
    }
    pub fn n_line(&self) -> usize {
        self.flows.len() / 4
    }
    pub fn n_gen(&self) -> usize {
        self.gens.len() / 2
    }
    pub fn n_flex(&self) -> usize {
        self.flex.len() / 4
    }
    pub fn e(&self, bus: usize) -> usize {
        self.e.start + bus
    }
    pub fn f(&self, bus: usize) -> usize {
        self.f.start + bus
    }
    /// Slot `k` (0..4) of in-service line `l`.
    pub fn flow(&self, l: usize, k: usize) -> usize {
        self.flows.start + 4 * l + k
    }
    pub fn pg(&self, g: usize) -> usize {
        self.gens.start + 2 * g
    }
    pub fn qg(&self, g: usize) -> usize {
        self.gens.start + 2 * g + 1
    }
    /// Slot `k` (0 = p_up, 1 = p_dn, 2 = q_up, 3 = q_dn) of unit `u`.
    pub fn flex_var(&self, u: usize, k: usize) -> usize {
        self.flex.start + 4 * u + k
    }
}

/// Interface setpoint in MW / MVAr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetPoint<T> {
    pub p_ref: T,
    pub q_ref: T,
}

impl<T: Scalar> TargetPoint<T> {
    pub fn new(p_ref: T, q_ref: T) -> Result<Self> {
        if !(p_ref.is_finite() && q_ref.is_finite()) {
            return Err(FlexError::InvalidObjective("target point must be finite".into()));
        }
        Ok(TargetPoint { p_ref, q_ref })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ObjectiveSpec<T> {
    /// Minimize `w_p·P + w_q·Q` of the reference generator. With `pin_p`
    /// the interface active power is held at that value (MW).
    BoundaryDirection { w_p: T, w_q: T, pin_p: Option<T> },
    /// Minimize the regulation cost of reaching `target`.
    MinCost { target: TargetPoint<T> },
}

impl<T: Scalar> ObjectiveSpec<T> {
    /// Direction objective with weights normalized to unit length.
    pub fn direction(w_p: T, w_q: T) -> Result<Self> {
        Self::pinned_direction(w_p, w_q, None)
    }

    pub fn pinned_direction(w_p: T, w_q: T, pin_p: Option<T>) -> Result<Self> {
        let norm = (w_p * w_p + w_q * w_q).sqrt();
        if !(norm.is_finite() && norm > T::zero()) {
            return Err(FlexError::InvalidObjective(
                "direction weights must be finite and not both zero".into(),
            ));
        }
        if let Some(p) = pin_p {
            if !p.is_finite() {
                return Err(FlexError::InvalidObjective("pinned power must be finite".into()));
            }
        }
        Ok(ObjectiveSpec::BoundaryDirection {
            w_p: w_p / norm,
            w_q: w_q / norm,
            pin_p,
        })
    }

    pub fn min_cost(p_ref: T, q_ref: T) -> Result<Self> {
        Ok(ObjectiveSpec::MinCost {
            target: TargetPoint::new(p_ref, q_ref)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub case: String,
    pub configuration: String,
}

/// Row blocks of the constraint vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowLayout {
    /// Four flow definitions per in-service line.
    pub flow_defs: Range<usize>,
    pub p_balance: Range<usize>,
    pub q_balance: Range<usize>,
    /// Two thermal rows per in-service line (one per direction).
    pub thermal: Range<usize>,
    pub voltage: Range<usize>,
    /// Interface pins (zero, one or two rows: P then Q).
    pub pins: Range<usize>,
}

#[derive(Debug, Clone)]
struct LineData<T> {
    from: usize,
    to: usize,
    g: T,
    b: T,
    s_max: T,
}

/// Hessian slots touched by one line.
#[derive(Debug, Clone, Copy)]
struct LineHess {
    // (e_i,e_j) (f_i,f_j) (f_i,e_j) (e_i,f_j)
    ee: usize,
    ff: usize,
    fe: usize,
    ef: usize,
}

/// One continuous subproblem: a configuration and an objective.
#[derive(Debug, Clone)]
pub struct QcpProblem<T> {
    pub layout: VariableLayout,
    pub rows: RowLayout,
    pub objective: ObjectiveSpec<T>,
    pub provenance: Provenance,
    s_base: T,
    n_bus: usize,
    bus_ids: Vec<usize>,
    line_names: Vec<String>,
    ref_bus: usize,
    ref_gen: usize,
    lines: Vec<LineData<T>>,
    gen_bus: Vec<usize>,
    flex_bus: Vec<usize>,
    p_d: Vec<T>,
    q_d: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    g_lo: Vec<T>,
    g_hi: Vec<T>,
    /// Gradient of the (linear) objective.
    c: Vec<T>,
    jac: Vec<(usize, usize)>,
    hess: Vec<(usize, usize)>,
    pin_vars: Vec<usize>,
    diag_slot: Vec<usize>,
    line_hess: Vec<LineHess>,
}

/// Residuals of a candidate point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals<T> {
    /// Equality rows as `g(x) - b`.
    pub equality: Vec<T>,
    /// Distance of each inequality row to its nearest bound; negative when
    /// violated.
    pub inequality_slack: Vec<T>,
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derivatives<T> {
    pub gradient: Vec<T>,
    pub jacobian: Vec<(usize, usize, T)>,
    /// Lower triangle of the Lagrangian Hessian.
    pub hessian: Vec<(usize, usize, T)>,
}

/// Builds the subproblem of `case` under `config`.
pub fn build_problem<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    obj: ObjectiveSpec<T>,
) -> Result<QcpProblem<T>> {
    if !is_connected(case, config) {
        return Err(FlexError::Disconnected(config.label.clone()));
    }
    if let ObjectiveSpec::BoundaryDirection { w_p, w_q, .. } = obj {
        if !(w_p.is_finite() && w_q.is_finite()) || (w_p == T::zero() && w_q == T::zero()) {
            return Err(FlexError::InvalidObjective(
                "direction weights must be finite and not both zero".into(),
            ));
        }
    }
    let ref_gen = case
        .reference_generator()
        .ok_or_else(|| FlexError::InvalidCase("no reference generator".into()))?;
    let n_bus = case.buses.len();
    let on = effective_topology(case, config);
    let n_line = on.len();
    let n_gen = case.generators.len();
    let n_flex = case.flex_units.len();
    let layout = VariableLayout {
        e: 0..n_bus,
        f: n_bus..2 * n_bus,
        flows: 2 * n_bus..2 * n_bus + 4 * n_line,
        gens: 2 * n_bus + 4 * n_line..2 * n_bus + 4 * n_line + 2 * n_gen,
        flex: 2 * n_bus + 4 * n_line + 2 * n_gen..2 * n_bus + 4 * n_line + 2 * n_gen + 4 * n_flex,
        lines: on.clone(),
    };
    let n = layout.n_vars();
    let idx = |id: usize| case.bus_index(id).expect("validated bus reference");
    let lines: Vec<LineData<T>> = on
        .iter()
        .map(|&l| {
            let line = &case.lines[l];
            let (g, b) = line_admittance(line);
            LineData {
                from: idx(line.from_bus),
                to: idx(line.to_bus),
                g,
                b,
                s_max: case.to_pu(line.s_max),
            }
        })
        .collect();
    let ref_bus = case.ref_index();
    let inf = T::infinity();

    let mut lo = vec![-inf; n];
    let mut hi = vec![inf; n];
    // Loose boxes only; the band rows carry the real limit. A box at v_max
    // would coincide with an active band row whenever f ≈ 0, which the
    // barrier handles badly.
    for (k, bus) in case.buses.iter().enumerate() {
        let wide = T::lit(2.0) * bus.v_max;
        lo[layout.e(k)] = -wide;
        hi[layout.e(k)] = wide;
        lo[layout.f(k)] = -wide;
        hi[layout.f(k)] = wide;
    }
    // positive root at the reference
    lo[layout.e(ref_bus)] = T::zero();
    lo[layout.f(ref_bus)] = T::zero();
    hi[layout.f(ref_bus)] = T::zero();
    for (g, gen) in case.generators.iter().enumerate() {
        lo[layout.pg(g)] = case.to_pu(gen.p_min);
        hi[layout.pg(g)] = case.to_pu(gen.p_max);
        lo[layout.qg(g)] = case.to_pu(gen.q_min);
        hi[layout.qg(g)] = case.to_pu(gen.q_max);
    }
    for (u, unit) in case.flex_units.iter().enumerate() {
        let caps = [unit.p_up_max, unit.p_dn_max, unit.q_up_max, unit.q_dn_max];
        for (k, cap) in caps.into_iter().enumerate() {
            lo[layout.flex_var(u, k)] = T::zero();
            hi[layout.flex_var(u, k)] = case.to_pu(cap);
        }
    }

    let pins: Vec<(usize, T)> = match obj {
        ObjectiveSpec::BoundaryDirection { pin_p, .. } => pin_p
            .map(|p| vec![(layout.pg(ref_gen), case.to_pu(p))])
            .unwrap_or_default(),
        ObjectiveSpec::MinCost { target } => vec![
            (layout.pg(ref_gen), case.to_pu(target.p_ref)),
            (layout.qg(ref_gen), case.to_pu(target.q_ref)),
        ],
    };
    let n_pin = pins.len();
    let rows = RowLayout {
        flow_defs: 0..4 * n_line,
        p_balance: 4 * n_line..4 * n_line + n_bus,
        q_balance: 4 * n_line + n_bus..4 * n_line + 2 * n_bus,
        thermal: 4 * n_line + 2 * n_bus..6 * n_line + 2 * n_bus,
        voltage: 6 * n_line + 2 * n_bus..6 * n_line + 3 * n_bus,
        pins: 6 * n_line + 3 * n_bus..6 * n_line + 3 * n_bus + n_pin,
    };
    let m = rows.pins.end;
    let mut g_lo = vec![T::zero(); m];
    let mut g_hi = vec![T::zero(); m];
    for (l, line) in lines.iter().enumerate() {
        for d in 0..2 {
            let r = rows.thermal.start + 2 * l + d;
            g_lo[r] = -inf;
            g_hi[r] = line.s_max * line.s_max;
        }
    }
    for (k, bus) in case.buses.iter().enumerate() {
        let r = rows.voltage.start + k;
        g_lo[r] = bus.v_min * bus.v_min;
        g_hi[r] = bus.v_max * bus.v_max;
    }
    for (i, &(_, v)) in pins.iter().enumerate() {
        g_lo[rows.pins.start + i] = v;
        g_hi[rows.pins.start + i] = v;
    }

    let mut c = vec![T::zero(); n];
    match obj {
        ObjectiveSpec::BoundaryDirection { w_p, w_q, .. } => {
            let norm = (w_p * w_p + w_q * w_q).sqrt();
            c[layout.pg(ref_gen)] = w_p / norm;
            c[layout.qg(ref_gen)] = w_q / norm;
        }
        ObjectiveSpec::MinCost { .. } => {
            // $/h per p.u. of regulation
            for (u, unit) in case.flex_units.iter().enumerate() {
                let prices = [unit.cost_p, unit.cost_p, unit.cost_q, unit.cost_q];
                for (k, price) in prices.into_iter().enumerate() {
                    c[layout.flex_var(u, k)] = price * case.s_base;
                }
            }
        }
    }

    let gen_bus: Vec<usize> = case.generators.iter().map(|g| idx(g.bus)).collect();
    let flex_bus: Vec<usize> = case.flex_units.iter().map(|u| idx(u.bus)).collect();

    // Jacobian structure, in the exact order `jacobian_values` writes it.
    let mut jac = Vec::new();
    for (l, line) in lines.iter().enumerate() {
        let (i, j) = (line.from, line.to);
        let ends = [
            [layout.e(i), layout.f(i), layout.e(j), layout.f(j)],
            [layout.e(j), layout.f(j), layout.e(i), layout.f(i)],
        ];
        for (d, vars) in ends.iter().enumerate() {
            for k in 0..2 {
                let r = rows.flow_defs.start + 4 * l + 2 * d + k;
                jac.push((r, layout.flow(l, 2 * d + k)));
                for &v in vars {
                    jac.push((r, v));
                }
            }
        }
    }
    for k in 0..n_bus {
        for (block, gen_slot, flex_slots, flow_slot) in [
            (rows.p_balance.start, 0usize, [0usize, 1], 0usize),
            (rows.q_balance.start, 1, [2, 3], 1),
        ] {
            let r = block + k;
            for (g, &b) in gen_bus.iter().enumerate() {
                if b == k {
                    jac.push((r, layout.gens.start + 2 * g + gen_slot));
                }
            }
            for (u, &b) in flex_bus.iter().enumerate() {
                if b == k {
                    for s in flex_slots {
                        jac.push((r, layout.flex_var(u, s)));
                    }
                }
            }
            for (l, line) in lines.iter().enumerate() {
                if line.from == k {
                    jac.push((r, layout.flow(l, flow_slot)));
                }
                if line.to == k {
                    jac.push((r, layout.flow(l, 2 + flow_slot)));
                }
            }
        }
    }
    for l in 0..n_line {
        for d in 0..2 {
            let r = rows.thermal.start + 2 * l + d;
            jac.push((r, layout.flow(l, 2 * d)));
            jac.push((r, layout.flow(l, 2 * d + 1)));
        }
    }
    for k in 0..n_bus {
        let r = rows.voltage.start + k;
        jac.push((r, layout.e(k)));
        jac.push((r, layout.f(k)));
    }
    for (i, &(var, _)) in pins.iter().enumerate() {
        jac.push((rows.pins.start + i, var));
    }

    // Hessian: diagonals for voltages and flows, plus cross terms per line.
    let mut slots: HashMap<(usize, usize), usize> = HashMap::new();
    let mut hess = Vec::new();
    let mut slot = |a: usize, b: usize| -> usize {
        let key = if a >= b { (a, b) } else { (b, a) };
        *slots.entry(key).or_insert_with(|| {
            hess.push(key);
            hess.len() - 1
        })
    };
    let mut diag_slot = vec![usize::MAX; n];
    for v in layout.e.start..layout.flows.end {
        diag_slot[v] = slot(v, v);
    }
    let line_hess: Vec<LineHess> = lines
        .iter()
        .map(|line| {
            let (i, j) = (line.from, line.to);
            LineHess {
                ee: slot(layout.e(i), layout.e(j)),
                ff: slot(layout.f(i), layout.f(j)),
                fe: slot(layout.f(i), layout.e(j)),
                ef: slot(layout.e(i), layout.f(j)),
            }
        })
        .collect();

    Ok(QcpProblem {
        layout,
        rows,
        objective: obj,
        provenance: Provenance {
            case: case.name.clone(),
            configuration: config.label.clone(),
        },
        s_base: case.s_base,
        n_bus,
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        line_names: on.iter().map(|&l| case.lines[l].name()).collect(),
        ref_bus,
        ref_gen,
        lines,
        gen_bus,
        flex_bus,
        p_d: case.buses.iter().map(|b| case.to_pu(b.p_d)).collect(),
        q_d: case.buses.iter().map(|b| case.to_pu(b.q_d)).collect(),
        lo,
        hi,
        g_lo,
        g_hi,
        c,
        jac,
        hess,
        pin_vars: pins.iter().map(|&(v, _)| v).collect(),
        diag_slot,
        line_hess,
    })
}

impl<T: Scalar> QcpProblem<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.pins.end
    }

    pub fn s_base(&self) -> T {
        self.s_base
    }

    pub fn ref_bus(&self) -> usize {
        self.ref_bus
    }

    /// Interface (P, Q) in MW / MVAr: the reference generator's injection.
    pub fn interface_mw(&self, x: &[T]) -> (T, T) {
        (
            x[self.layout.pg(self.ref_gen)] * self.s_base,
            x[self.layout.qg(self.ref_gen)] * self.s_base,
        )
    }

    /// Flex activations `(p_up, p_dn, q_up, q_dn)` per unit in MW / MVAr.
    pub fn flex_mw(&self, x: &[T]) -> Vec<[T; 4]> {
        (0..self.flex_bus.len())
            .map(|u| std::array::from_fn(|k| x[self.layout.flex_var(u, k)] * self.s_base))
            .collect()
    }

    /// Series admittance and end buses of in-service line `l`.
    pub fn line_params(&self, l: usize) -> (usize, usize, T, T) {
        let d = &self.lines[l];
        (d.from, d.to, d.g, d.b)
    }

    /// Decodes `x` into plain voltages and injections for independent
    /// verification.
    pub fn operating_point(&self, x: &[T]) -> OperatingPoint<T> {
        let lay = &self.layout;
        let target = match self.objective {
            ObjectiveSpec::MinCost { target } => Some((target.p_ref, target.q_ref)),
            ObjectiveSpec::BoundaryDirection { .. } => None,
        };
        OperatingPoint {
            voltages: (0..self.n_bus).map(|k| (x[lay.e(k)], x[lay.f(k)])).collect(),
            generators: (0..self.gen_bus.len())
                .map(|g| (x[lay.pg(g)] * self.s_base, x[lay.qg(g)] * self.s_base))
                .collect(),
            flex: self.flex_mw(x),
            target,
        }
    }

    /// Inverse of [`Self::operating_point`]; flows are recomputed from the
    /// voltages.
    pub fn point_to_vector(&self, point: &OperatingPoint<T>) -> Result<Vec<T>> {
        let lay = &self.layout;
        if point.voltages.len() != self.n_bus
            || point.generators.len() != self.gen_bus.len()
            || point.flex.len() != self.flex_bus.len()
        {
            return Err(FlexError::DimensionMismatch {
                expected: self.n_bus + self.gen_bus.len() + self.flex_bus.len(),
                got: point.voltages.len() + point.generators.len() + point.flex.len(),
            });
        }
        let mut x = vec![T::zero(); lay.n_vars()];
        for (k, &(e, f)) in point.voltages.iter().enumerate() {
            x[lay.e(k)] = e;
            x[lay.f(k)] = f;
        }
        for (g, &(p, q)) in point.generators.iter().enumerate() {
            x[lay.pg(g)] = p / self.s_base;
            x[lay.qg(g)] = q / self.s_base;
        }
        for (u, a) in point.flex.iter().enumerate() {
            for k in 0..4 {
                x[lay.flex_var(u, k)] = a[k] / self.s_base;
            }
        }
        self.fill_flows(&mut x);
        Ok(x)
    }

    /// Voltage and thermal limits whose slack at `x` is within `tol`,
    /// tagged like `v_min@33` or `s_max@7-14`. Voltage slack is measured on
    /// the magnitude (p.u.), thermal slack on apparent power (p.u.).
    pub fn binding_constraints(&self, x: &[T], tol: T) -> Vec<String> {
        let lay = &self.layout;
        let mut tags = Vec::new();
        for k in 0..self.n_bus {
            let v = (x[lay.e(k)] * x[lay.e(k)] + x[lay.f(k)] * x[lay.f(k)]).sqrt();
            let r = self.rows.voltage.start + k;
            // the reference band is a tap setpoint, not a network limit
            if k == self.ref_bus || self.g_lo[r] == self.g_hi[r] {
                continue;
            }
            if v - self.g_lo[r].sqrt() <= tol {
                tags.push(format!("v_min@{}", self.bus_ids[k]));
            }
            if self.g_hi[r].sqrt() - v <= tol {
                tags.push(format!("v_max@{}", self.bus_ids[k]));
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            let worst = (0..2)
                .map(|d| {
                    let (p, q) = (x[lay.flow(l, 2 * d)], x[lay.flow(l, 2 * d + 1)]);
                    (p * p + q * q).sqrt()
                })
                .fold(T::zero(), |a, b| a.max(b));
            if line.s_max - worst <= tol {
                tags.push(format!("s_max@{}", self.line_names[l]));
            }
        }
        tags
    }

    /// Completes a point given only voltages, generator and flex values:
    /// directed flows are recomputed from the voltages.
    pub fn fill_flows(&self, x: &mut [T]) {
        for (l, line) in self.lines.iter().enumerate() {
            let lay = &self.layout;
            let (ei, fi) = (x[lay.e(line.from)], x[lay.f(line.from)]);
            let (ej, fj) = (x[lay.e(line.to)], x[lay.f(line.to)]);
            let (pij, qij) = branch_flow(ei, fi, ej, fj, line.g, line.b);
            let (pji, qji) = branch_flow(ej, fj, ei, fi, line.g, line.b);
            x[lay.flow(l, 0)] = pij;
            x[lay.flow(l, 1)] = qij;
            x[lay.flow(l, 2)] = pji;
            x[lay.flow(l, 3)] = qji;
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        let n = self.layout.n_vars();
        if x.len() != n {
            return Err(FlexError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(FlexError::NonFinite(i));
        }
        Ok(())
    }

    fn is_equality(&self, r: usize) -> bool {
        self.g_lo[r] == self.g_hi[r]
    }

    /// Equality residuals, inequality slacks and the objective at `x`.
    pub fn eval_residuals(&self, x: &[T]) -> Result<Residuals<T>> {
        self.check_input(x)?;
        let mut g = vec![T::zero(); self.n_rows()];
        self.constraints(x, &mut g);
        let mut equality = Vec::new();
        let mut inequality_slack = Vec::new();
        for r in 0..g.len() {
            if self.is_equality(r) {
                equality.push(g[r] - self.g_lo[r]);
            } else {
                inequality_slack.push((g[r] - self.g_lo[r]).min(self.g_hi[r] - g[r]));
            }
        }
        Ok(Residuals {
            equality,
            inequality_slack,
            objective: self.objective(x),
        })
    }

    /// Objective gradient, constraint Jacobian and Lagrangian Hessian at
    /// `x`. Without `lambda`, every multiplier and the objective factor are
    /// one.
    pub fn eval_derivatives(&self, x: &[T], lambda: Option<&[T]>) -> Result<Derivatives<T>> {
        self.check_input(x)?;
        let ones = vec![T::one(); self.n_rows()];
        let lambda = lambda.unwrap_or(&ones);
        if lambda.len() != self.n_rows() {
            return Err(FlexError::DimensionMismatch {
                expected: self.n_rows(),
                got: lambda.len(),
            });
        }
        let mut gradient = vec![T::zero(); x.len()];
        self.gradient(x, &mut gradient);
        let mut jv = vec![T::zero(); self.jac.len()];
        self.jacobian_values(x, &mut jv);
        let mut hv = vec![T::zero(); self.hess.len()];
        self.hessian_values(x, T::one(), lambda, &mut hv);
        Ok(Derivatives {
            gradient,
            jacobian: self.jac.iter().zip(jv).map(|(&(r, c), v)| (r, c, v)).collect(),
            hessian: self.hess.iter().zip(hv).map(|(&(r, c), v)| (r, c, v)).collect(),
        })
    }

    /// Flat start: unit voltages, no flows or flex, the reference generator
    /// covering total demand and other generators at the midpoint of their
    /// range.
    pub fn flat_start(&self) -> Vec<T> {
        let lay = &self.layout;
        let mut x = vec![T::zero(); lay.n_vars()];
        for k in 0..self.n_bus {
            x[lay.e(k)] = T::one();
        }
        let half = T::lit(0.5);
        let mut p_rest = T::zero();
        let mut q_rest = T::zero();
        for g in 0..self.gen_bus.len() {
            if g == self.ref_gen {
                continue;
            }
            let clamp_mid = |v: usize| {
                let (l, h) = (self.lo[v], self.hi[v]);
                if l.is_finite() && h.is_finite() {
                    (l + h) * half
                } else {
                    T::zero().max(l).min(h)
                }
            };
            x[lay.pg(g)] = clamp_mid(lay.pg(g));
            x[lay.qg(g)] = clamp_mid(lay.qg(g));
            p_rest += x[lay.pg(g)];
            q_rest += x[lay.qg(g)];
        }
        let pd: T = self.p_d.iter().copied().sum();
        let qd: T = self.q_d.iter().copied().sum();
        x[lay.pg(self.ref_gen)] = pd - p_rest;
        x[lay.qg(self.ref_gen)] = qd - q_rest;
        x
    }
}

impl<T: Scalar> NlpProblem<T> for QcpProblem<T> {
    fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn n_cons(&self) -> usize {
        self.n_rows()
    }

    fn var_bounds(&self) -> (Vec<T>, Vec<T>) {
        (self.lo.clone(), self.hi.clone())
    }

    fn con_bounds(&self) -> (Vec<T>, Vec<T>) {
        (self.g_lo.clone(), self.g_hi.clone())
    }

    fn initial_point(&self) -> Vec<T> {
        self.flat_start()
    }

    fn objective(&self, x: &[T]) -> T {
        self.c.iter().zip(x).map(|(a, b)| *a * *b).sum()
    }

    fn gradient(&self, _x: &[T], grad: &mut [T]) {
        grad.copy_from_slice(&self.c);
    }

    fn constraints(&self, x: &[T], g: &mut [T]) {
        let lay = &self.layout;
        let rows = &self.rows;
        for v in g.iter_mut() {
            *v = T::zero();
        }
        for (l, line) in self.lines.iter().enumerate() {
            let (ei, fi) = (x[lay.e(line.from)], x[lay.f(line.from)]);
            let (ej, fj) = (x[lay.e(line.to)], x[lay.f(line.to)]);
            let (pij, qij) = branch_flow(ei, fi, ej, fj, line.g, line.b);
            let (pji, qji) = branch_flow(ej, fj, ei, fi, line.g, line.b);
            let r = rows.flow_defs.start + 4 * l;
            g[r] = x[lay.flow(l, 0)] - pij;
            g[r + 1] = x[lay.flow(l, 1)] - qij;
            g[r + 2] = x[lay.flow(l, 2)] - pji;
            g[r + 3] = x[lay.flow(l, 3)] - qji;
            g[rows.p_balance.start + line.from] -= x[lay.flow(l, 0)];
            g[rows.q_balance.start + line.from] -= x[lay.flow(l, 1)];
            g[rows.p_balance.start + line.to] -= x[lay.flow(l, 2)];
            g[rows.q_balance.start + line.to] -= x[lay.flow(l, 3)];
            for d in 0..2 {
                let p = x[lay.flow(l, 2 * d)];
                let q = x[lay.flow(l, 2 * d + 1)];
                g[rows.thermal.start + 2 * l + d] = p * p + q * q;
            }
        }
        for k in 0..self.n_bus {
            g[rows.p_balance.start + k] -= self.p_d[k];
            g[rows.q_balance.start + k] -= self.q_d[k];
            let (e, f) = (x[lay.e(k)], x[lay.f(k)]);
            g[rows.voltage.start + k] = e * e + f * f;
        }
        for (gi, &b) in self.gen_bus.iter().enumerate() {
            g[rows.p_balance.start + b] += x[lay.pg(gi)];
            g[rows.q_balance.start + b] += x[lay.qg(gi)];
        }
        for (u, &b) in self.flex_bus.iter().enumerate() {
            g[rows.p_balance.start + b] += x[lay.flex_var(u, 0)] - x[lay.flex_var(u, 1)];
            g[rows.q_balance.start + b] += x[lay.flex_var(u, 2)] - x[lay.flex_var(u, 3)];
        }
        for (i, &var) in self.pin_vars.iter().enumerate() {
            g[rows.pins.start + i] = x[var];
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac.clone()
    }

    fn jacobian_values(&self, x: &[T], vals: &mut [T]) {
        let lay = &self.layout;
        let mut k = 0;
        let mut put = |v: T| {
            vals[k] = v;
            k += 1;
        };
        for line in &self.lines {
            let (i, j) = (line.from, line.to);
            let (ei, fi, ej, fj) = (x[lay.e(i)], x[lay.f(i)], x[lay.e(j)], x[lay.f(j)]);
            for (a, b, c, d) in [(ei, fi, ej, fj), (ej, fj, ei, fi)] {
                let (dp, dq) = branch_flow_grad(a, b, c, d, line.g, line.b);
                for grad in [dp, dq] {
                    put(T::one());
                    for v in grad {
                        put(-v);
                    }
                }
            }
        }
        // balance rows: same enumeration as the structure
        for kb in 0..self.n_bus {
            // P row then Q row
            for _ in 0..2 {
                for &b in &self.gen_bus {
                    if b == kb {
                        put(T::one());
                    }
                }
                for &b in &self.flex_bus {
                    if b == kb {
                        put(T::one());
                        put(-T::one());
                    }
                }
                for line in &self.lines {
                    if line.from == kb {
                        put(-T::one());
                    }
                    if line.to == kb {
                        put(-T::one());
                    }
                }
            }
        }
        let two = T::lit(2.0);
        for l in 0..self.lines.len() {
            for d in 0..2 {
                put(two * x[lay.flow(l, 2 * d)]);
                put(two * x[lay.flow(l, 2 * d + 1)]);
            }
        }
        for kb in 0..self.n_bus {
            put(two * x[lay.e(kb)]);
            put(two * x[lay.f(kb)]);
        }
        for _ in &self.pin_vars {
            put(T::one());
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess.clone()
    }

    fn hessian_values(&self, _x: &[T], _obj_factor: T, lambda: &[T], vals: &mut [T]) {
        for v in vals.iter_mut() {
            *v = T::zero();
        }
        let lay = &self.layout;
        let rows = &self.rows;
        let two = T::lit(2.0);
        for (l, line) in self.lines.iter().enumerate() {
            let (g, b) = (line.g, line.b);
            let r = rows.flow_defs.start + 4 * l;
            // rows are `flow - h(e, f)`, so the curvature enters negated
            let (lp_ij, lq_ij, lp_ji, lq_ji) = (lambda[r], lambda[r + 1], lambda[r + 2], lambda[r + 3]);
            // diagonal curvature at the sending end of each direction
            let di = -(lp_ij * two * g - lq_ij * two * b);
            let dj = -(lp_ji * two * g - lq_ji * two * b);
            let (i, j) = (line.from, line.to);
            vals[self.diag_slot[lay.e(i)]] += di;
            vals[self.diag_slot[lay.f(i)]] += di;
            vals[self.diag_slot[lay.e(j)]] += dj;
            vals[self.diag_slot[lay.f(j)]] += dj;
            let lp = lp_ij + lp_ji;
            let lq = lq_ij + lq_ji;
            let h = self.line_hess[l];
            // ∂²/∂e_i∂e_j and ∂²/∂f_i∂f_j: p → -G, q → +B (same both ways)
            vals[h.ee] += -(-g * lp + b * lq);
            vals[h.ff] += -(-g * lp + b * lq);
            // ∂²/∂f_i∂e_j: p_ij → -B, q_ij → -G; p_ji → +B, q_ji → +G
            let cross = (-b * lp_ij - g * lq_ij) + (b * lp_ji + g * lq_ji);
            vals[h.fe] += -cross;
            vals[h.ef] += cross;
            for d in 0..2 {
                let lt = lambda[rows.thermal.start + 2 * l + d];
                vals[self.diag_slot[lay.flow(l, 2 * d)]] += two * lt;
                vals[self.diag_slot[lay.flow(l, 2 * d + 1)]] += two * lt;
            }
        }
        for k in 0..self.n_bus {
            let lv = lambda[rows.voltage.start + k];
            vals[self.diag_slot[lay.e(k)]] += two * lv;
            vals[self.diag_slot[lay.f(k)]] += two * lv;
        }
    }

    fn perturb_start(&self, x: &mut [T], rng: &mut ChaCha8Rng, amplitude: T) {
        for k in 0..self.n_bus {
            perturb_uniform(&mut x[self.layout.e(k)], rng, amplitude);
            if k != self.ref_bus {
                perturb_uniform(&mut x[self.layout.f(k)], rng, amplitude);
            }
        }
    }
}

/// Worst relative deviation of the analytic derivatives from central
/// differences, each entry measured as `|a − b| / max(1, |a|, |b|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeErrors {
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
}

impl DerivativeErrors {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.jacobian).max(self.hessian)
    }
}

/// Compares gradient, Jacobian and Lagrangian Hessian (objective factor
/// one, multipliers `lambda`) with central differences of step `h`.
pub fn derivative_check<T: Scalar>(
    problem: &QcpProblem<T>,
    x: &[T],
    lambda: &[T],
    h: f64,
) -> Result<DerivativeErrors> {
    let d = problem.eval_derivatives(x, Some(lambda))?;
    let n = x.len();
    let m = problem.n_rows();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let step = T::lit(h);
    let two_h = T::lit(2.0 * h);

    // ∇L at a shifted point, dense
    let lagrangian_grad = |xs: &[T]| -> Vec<f64> {
        let mut g = vec![T::zero(); n];
        problem.gradient(xs, &mut g);
        let mut jv = vec![T::zero(); problem.jac.len()];
        problem.jacobian_values(xs, &mut jv);
        for (k, &(r, c)) in problem.jac.iter().enumerate() {
            g[c] += jv[k] * lambda[r];
        }
        g.iter().map(|v| v.as_f64()).collect()
    };

    let mut jac_dense = vec![0.0; m * n];
    for &(r, c, v) in &d.jacobian {
        jac_dense[r * n + c] = v.as_f64();
    }
    let mut hess_dense = vec![0.0; n * n];
    for &(r, c, v) in &d.hessian {
        hess_dense[r * n + c] = v.as_f64();
        hess_dense[c * n + r] = v.as_f64();
    }

    let mut errs = DerivativeErrors { gradient: 0.0, jacobian: 0.0, hessian: 0.0 };
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut gp = vec![T::zero(); m];
    let mut gm = vec![T::zero(); m];
    for j in 0..n {
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        let fd = ((problem.objective(&xp) - problem.objective(&xm)) / two_h).as_f64();
        errs.gradient = errs.gradient.max(rel(d.gradient[j].as_f64(), fd));
        problem.constraints(&xp, &mut gp);
        problem.constraints(&xm, &mut gm);
        for r in 0..m {
            let fd = ((gp[r] - gm[r]) / two_h).as_f64();
            errs.jacobian = errs.jacobian.max(rel(jac_dense[r * n + j], fd));
        }
        let (lp, lm) = (lagrangian_grad(&xp), lagrangian_grad(&xm));
        for i in 0..n {
            let fd = (lp[i] - lm[i]) / (2.0 * h);
            errs.hessian = errs.hessian.max(rel(hess_dense[i * n + j], fd));
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(errs)
}
