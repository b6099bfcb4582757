//! Independent verification: a polar Newton–Raphson power flow, a
//! backward–forward sweep for radial feeders, and a constraint checker.
//!
//! Nothing here touches the optimization model's evaluators; operating
//! points come in as plain voltages and injections and are re-solved from
//! scratch in `f64`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{effective_topology, is_connected, Configuration};
use crate::error::{FlexError, Result};
use crate::network::NetworkCase;
use crate::scalar::Scalar;

const PF_TOL: f64 = 1e-10;
const PF_MAX_ITER: usize = 50;
const SWEEP_TOL: f64 = 1e-13;
const SWEEP_MAX_ITER: usize = 500;

/// Flow at both ends of one line, MW / MVAr, positive leaving the end bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFlow {
    pub line: usize,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowResult {
    pub converged: bool,
    /// Voltage magnitude (p.u.) per bus, case order.
    pub vm: Vec<f64>,
    /// Voltage angle (rad) per bus.
    pub va: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub losses_mw: f64,
    pub losses_mvar: f64,
    /// Injection of the slack (reference) bus, MW / MVAr.
    pub slack: (f64, f64),
    /// Max nodal mismatch, p.u.
    pub mismatch: f64,
    pub iterations: usize,
}

struct Grid {
    n: usize,
    slack: usize,
    /// In-service lines as (case index, from, to, series admittance).
    branches: Vec<(usize, usize, usize, Complex64)>,
    y: Vec<Vec<Complex64>>,
}

fn build_grid<T: Scalar>(case: &NetworkCase<T>, config: &Configuration) -> Result<Grid> {
    if !is_connected(case, config) {
        return Err(FlexError::Disconnected(config.label.clone()));
    }
    let n = case.buses.len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut branches = Vec::new();
    for l in effective_topology(case, config) {
        let line = &case.lines[l];
        let i = case.bus_index(line.from_bus).expect("validated bus");
        let j = case.bus_index(line.to_bus).expect("validated bus");
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(line.r.as_f64(), line.x.as_f64());
        y[i][i] += ys;
        y[j][j] += ys;
        y[i][j] -= ys;
        y[j][i] -= ys;
        branches.push((l, i, j, ys));
    }
    Ok(Grid {
        n,
        slack: case.ref_index(),
        branches,
        y,
    })
}

fn injections(grid: &Grid, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..grid.n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
    (0..grid.n)
        .map(|i| {
            let mut cur = Complex64::new(0.0, 0.0);
            for k in 0..grid.n {
                cur += grid.y[i][k] * v[k];
            }
            v[i] * cur.conj()
        })
        .collect()
}

fn finish(
    case_s_base: f64,
    grid: &Grid,
    vm: Vec<f64>,
    va: Vec<f64>,
    converged: bool,
    mismatch: f64,
    iterations: usize,
) -> PowerFlowResult {
    let v: Vec<Complex64> = (0..grid.n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
    let mut flows = Vec::with_capacity(grid.branches.len());
    let mut loss = Complex64::new(0.0, 0.0);
    for &(l, i, j, ys) in &grid.branches {
        let s_ij = v[i] * ((v[i] - v[j]) * ys).conj();
        let s_ji = v[j] * ((v[j] - v[i]) * ys).conj();
        loss += s_ij + s_ji;
        flows.push(BranchFlow {
            line: l,
            p_from: s_ij.re * case_s_base,
            q_from: s_ij.im * case_s_base,
            p_to: s_ji.re * case_s_base,
            q_to: s_ji.im * case_s_base,
        });
    }
    let s = injections(grid, &vm, &va)[grid.slack];
    PowerFlowResult {
        converged,
        vm,
        va,
        flows,
        losses_mw: loss.re * case_s_base,
        losses_mvar: loss.im * case_s_base,
        slack: (s.re * case_s_base, s.im * case_s_base),
        mismatch,
        iterations,
    }
}

/// Newton–Raphson power flow in polar coordinates with the reference bus
/// as slack at magnitude `v_ref` and angle 0. `injections_mw` holds the
/// net (P, Q) injection of every bus in MW / MVAr; the slack entry is
/// ignored. Starts flat.
pub fn ac_power_flow<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    injections_mw: &[(T, T)],
    v_ref: T,
) -> Result<PowerFlowResult> {
    let grid = build_grid(case, config)?;
    let n = grid.n;
    if injections_mw.len() != n {
        return Err(FlexError::DimensionMismatch {
            expected: n,
            got: injections_mw.len(),
        });
    }
    let s_base = case.s_base.as_f64();
    let spec: Vec<Complex64> = injections_mw
        .iter()
        .map(|&(p, q)| Complex64::new(p.as_f64() / s_base, q.as_f64() / s_base))
        .collect();
    let pq: Vec<usize> = (0..n).filter(|&k| k != grid.slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    vm[grid.slack] = v_ref.as_f64();

    let mut mismatch;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let s = injections(&grid, &vm, &va);
        let mut f = DVector::zeros(2 * m);
        for (a, &k) in pq.iter().enumerate() {
            f[a] = spec[k].re - s[k].re;
            f[m + a] = spec[k].im - s[k].im;
        }
        mismatch = f.amax();
        if mismatch <= PF_TOL {
            converged = true;
            break;
        }
        if iterations >= PF_MAX_ITER || !mismatch.is_finite() {
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (a, &i) in pq.iter().enumerate() {
            for (b, &k) in pq.iter().enumerate() {
                let g = grid.y[i][k].re;
                let bb = grid.y[i][k].im;
                if i == k {
                    let (p, q) = (s[i].re, s[i].im);
                    jac[(a, b)] = -q - bb * vm[i] * vm[i];
                    jac[(a, m + b)] = p / vm[i] + g * vm[i];
                    jac[(m + a, b)] = p - g * vm[i] * vm[i];
                    jac[(m + a, m + b)] = q / vm[i] - bb * vm[i];
                } else {
                    let t = va[i] - va[k];
                    let (sn, cs) = t.sin_cos();
                    jac[(a, b)] = vm[i] * vm[k] * (g * sn - bb * cs);
                    jac[(a, m + b)] = vm[i] * (g * cs + bb * sn);
                    jac[(m + a, b)] = -vm[i] * vm[k] * (g * cs + bb * sn);
                    jac[(m + a, m + b)] = vm[i] * (g * sn - bb * cs);
                }
            }
        }
        let Some(dx) = jac.lu().solve(&f) else {
            break;
        };
        for (a, &k) in pq.iter().enumerate() {
            va[k] += dx[a];
            vm[k] += dx[m + a];
        }
    }
    Ok(finish(s_base, &grid, vm, va, converged, mismatch, iterations))
}

/// Backward–forward sweep for radial configurations; same inputs as
/// [`ac_power_flow`]. Fails on meshed topologies.
pub fn sweep_power_flow<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    injections_mw: &[(T, T)],
    v_ref: T,
) -> Result<PowerFlowResult> {
    let grid = build_grid(case, config)?;
    let n = grid.n;
    if grid.branches.len() + 1 != n {
        return Err(FlexError::InvalidCase(format!(
            "configuration {} is not radial",
            config.label
        )));
    }
    if injections_mw.len() != n {
        return Err(FlexError::DimensionMismatch {
            expected: n,
            got: injections_mw.len(),
        });
    }
    let s_base = case.s_base.as_f64();
    let spec: Vec<Complex64> = injections_mw
        .iter()
        .map(|&(p, q)| Complex64::new(p.as_f64() / s_base, q.as_f64() / s_base))
        .collect();
    // tree from the slack: parent bus and series impedance towards it
    let mut adj = vec![Vec::new(); n];
    for &(_, i, j, ys) in &grid.branches {
        adj[i].push((j, ys));
        adj[j].push((i, ys));
    }
    let mut parent = vec![(usize::MAX, Complex64::new(0.0, 0.0)); n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([grid.slack]);
    seen[grid.slack] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(w, ys) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = (u, Complex64::new(1.0, 0.0) / ys);
                queue.push_back(w);
            }
        }
    }
    let mut v = vec![Complex64::new(v_ref.as_f64(), 0.0); n];
    let mut iterations = 0;
    let mut converged = false;
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    while iterations < SWEEP_MAX_ITER {
        iterations += 1;
        // backward: branch current into each bus from its parent
        for k in 0..n {
            current[k] = if k == grid.slack {
                Complex64::new(0.0, 0.0)
            } else {
                -(spec[k] / v[k]).conj()
            };
        }
        for &k in order.iter().rev() {
            if k != grid.slack {
                let p = parent[k].0;
                let ck = current[k];
                current[p] += ck;
            }
        }
        // forward
        let mut delta: f64 = 0.0;
        for &k in &order {
            if k != grid.slack {
                let (p, z) = parent[k];
                let nv = v[p] - z * current[k];
                delta = delta.max((nv - v[k]).norm());
                v[k] = nv;
            }
        }
        if delta <= SWEEP_TOL {
            converged = true;
            break;
        }
    }
    let vm: Vec<f64> = v.iter().map(|c| c.norm()).collect();
    let va: Vec<f64> = v.iter().map(|c| c.arg()).collect();
    let s = injections(&grid, &vm, &va);
    let mismatch = (0..n)
        .filter(|&k| k != grid.slack)
        .map(|k| (s[k] - spec[k]).norm())
        .fold(0.0, f64::max);
    Ok(finish(s_base, &grid, vm, va, converged, mismatch, iterations))
}

/// Receiving-end voltage magnitude of a two-bus feeder with sending-end
/// magnitude `v1`, series impedance `r + jx` and receiving-end load
/// `p + jq` (all p.u.), on the high-voltage branch.
pub fn two_bus_receiving_voltage(v1: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let a = v1 * v1 - 2.0 * (r * p + x * q);
    let disc = a * a - 4.0 * (r * r + x * x) * (p * p + q * q);
    ((a + disc.sqrt()) / 2.0).sqrt()
}

/// A decoded operating point: what the optimizer claims, stripped of its
/// internal variable layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint<T> {
    /// Rectangular voltage `(e, f)` per bus, case order.
    pub voltages: Vec<(T, T)>,
    /// Output of each generator, MW / MVAr.
    pub generators: Vec<(T, T)>,
    /// `(p_up, p_dn, q_up, q_dn)` per flexible unit, MW / MVAr.
    pub flex: Vec<[T; 4]>,
    /// Pinned interface setpoint, if the point answers a cost query.
    pub target: Option<(T, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCheck {
    pub family: String,
    pub passed: bool,
    /// Largest violation (p.u.) found in the family.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub checks: Vec<FamilyCheck>,
    pub power_flow: PowerFlowResult,
}

impl VerificationReport {
    pub fn check(&self, family: &str) -> Option<&FamilyCheck> {
        self.checks.iter().find(|c| c.family == family)
    }
}

fn family(name: &str, worst: f64, tol: f64, detail: String) -> FamilyCheck {
    FamilyCheck {
        family: name.into(),
        passed: worst <= tol,
        worst,
        detail,
    }
}

/// Re-solves the network from the point's injections and checks every
/// constraint family at tolerance `tol` (p.u.).
pub fn verify_point<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    point: &OperatingPoint<T>,
    tol: f64,
) -> Result<VerificationReport> {
    let n = case.buses.len();
    if point.voltages.len() != n {
        return Err(FlexError::DimensionMismatch {
            expected: n,
            got: point.voltages.len(),
        });
    }
    if point.generators.len() != case.generators.len() || point.flex.len() != case.flex_units.len() {
        return Err(FlexError::DimensionMismatch {
            expected: case.generators.len() + case.flex_units.len(),
            got: point.generators.len() + point.flex.len(),
        });
    }
    let s_base = case.s_base.as_f64();
    let bus = |id: usize| case.bus_index(id).expect("validated bus");
    let mut inj = vec![(0.0f64, 0.0f64); n];
    for (k, b) in case.buses.iter().enumerate() {
        inj[k] = (-b.p_d.as_f64(), -b.q_d.as_f64());
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let k = bus(gen.bus);
        inj[k].0 += point.generators[g].0.as_f64();
        inj[k].1 += point.generators[g].1.as_f64();
    }
    for (u, unit) in case.flex_units.iter().enumerate() {
        let k = bus(unit.bus);
        let a = point.flex[u].map(|v| v.as_f64());
        inj[k].0 += a[0] - a[1];
        inj[k].1 += a[2] - a[3];
    }
    let ref_k = case.ref_index();
    let (e_ref, f_ref) = point.voltages[ref_k];
    let v_ref = (e_ref.as_f64().powi(2) + f_ref.as_f64().powi(2)).sqrt();
    let inj_t: Vec<(T, T)> = inj.iter().map(|&(p, q)| (T::lit(p), T::lit(q))).collect();
    let pf = ac_power_flow(case, config, &inj_t, T::lit(v_ref))?;
    let ref_gen = case.reference_generator().expect("reference generator");
    // the oracle's view of the reference generator: slack minus whatever
    // else sits at the reference bus
    let ref_out = (
        pf.slack.0 - (inj[ref_k].0 - point.generators[ref_gen].0.as_f64()),
        pf.slack.1 - (inj[ref_k].1 - point.generators[ref_gen].1.as_f64()),
    );
    let mut checks = Vec::new();
    checks.push(family(
        "power_flow",
        if pf.converged { 0.0 } else { pf.mismatch },
        0.0,
        format!("{} iterations, mismatch {:.3e}", pf.iterations, pf.mismatch),
    ));

    // voltage agreement, rotated so the reference angle is zero
    let ang_ref = f_ref.as_f64().atan2(e_ref.as_f64());
    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for k in 0..n {
        let (e, f) = point.voltages[k];
        let claimed = Complex64::new(e.as_f64(), f.as_f64()) * Complex64::from_polar(1.0, -ang_ref);
        let d = (claimed - Complex64::from_polar(pf.vm[k], pf.va[k])).norm();
        if d > worst {
            worst = d;
            where_ = format!("bus {}", case.buses[k].id);
        }
    }
    checks.push(family("voltage_agreement", worst, tol, where_));

    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for (k, b) in case.buses.iter().enumerate() {
        // both the oracle's magnitude and the claimed one must sit in band
        let (e, f) = point.voltages[k];
        let claimed = (e.as_f64().powi(2) + f.as_f64().powi(2)).sqrt();
        for v in [pf.vm[k], claimed] {
            let viol = (b.v_min.as_f64() - v).max(v - b.v_max.as_f64());
            if viol > worst {
                worst = viol;
                let side = if v < b.v_min.as_f64() { "below v_min" } else { "above v_max" };
                where_ = format!("bus {} at {v:.6} p.u. {side}", b.id);
            }
        }
    }
    checks.push(family("voltage_band", worst, tol, where_));

    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for fl in &pf.flows {
        let line = &case.lines[fl.line];
        let limit = line.s_max.as_f64() / s_base;
        for (p, q) in [(fl.p_from, fl.q_from), (fl.p_to, fl.q_to)] {
            let s = (p * p + q * q).sqrt() / s_base;
            if s - limit > worst {
                worst = s - limit;
                where_ = format!("line {}", line.name());
            }
        }
    }
    checks.push(family("thermal", worst, tol, where_));

    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for (u, unit) in case.flex_units.iter().enumerate() {
        let caps = [unit.p_up_max, unit.p_dn_max, unit.q_up_max, unit.q_dn_max];
        for k in 0..4 {
            let a = point.flex[u][k].as_f64() / s_base;
            let viol = (-a).max(a - caps[k].as_f64() / s_base);
            if viol > worst {
                worst = viol;
                where_ = format!("unit {}", unit.label);
            }
        }
    }
    checks.push(family("flex_bounds", worst, tol, where_));

    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for (g, gen) in case.generators.iter().enumerate() {
        let (p, q) = if gen.is_reference {
            ref_out
        } else {
            (point.generators[g].0.as_f64(), point.generators[g].1.as_f64())
        };
        let viol = [
            gen.p_min.as_f64() - p,
            p - gen.p_max.as_f64(),
            gen.q_min.as_f64() - q,
            q - gen.q_max.as_f64(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
            / s_base;
        if viol > worst {
            worst = viol;
            where_ = format!("generator at bus {}", gen.bus);
        }
    }
    checks.push(family("generator_bounds", worst, tol, where_));

    // losses implied by the claimed injections vs the oracle's
    let claimed_loss: f64 = inj.iter().map(|v| v.0).sum();
    checks.push(family(
        "losses",
        (claimed_loss - pf.losses_mw).abs() / s_base,
        tol,
        format!("claimed {claimed_loss:.9} MW, oracle {:.9} MW", pf.losses_mw),
    ));

    if let Some((tp, tq)) = point.target {
        let worst = (ref_out.0 - tp.as_f64()).abs().max((ref_out.1 - tq.as_f64()).abs()) / s_base;
        checks.push(family(
            "pinning",
            worst,
            tol,
            format!(
                "interface ({:.9}, {:.9}) vs target ({tp}, {tq})",
                ref_out.0, ref_out.1
            ),
        ));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        passed,
        checks,
        power_flow: pf,
    })
}
