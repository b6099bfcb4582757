//! Network data model: buses, lines, generators, flexible units and the
//! per-unit conventions shared by every solver.

mod format;
mod validate;

pub use format::{parse_case, to_case_text};
pub use validate::{validate_case, Diagnostic, DiagnosticKind};

use serde::Serialize;

use crate::scalar::Scalar;

/// Voltage bounds (p.u.) and demand (MW / MVAr) at one bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus<T> {
    pub id: usize,
    pub v_min: T,
    pub v_max: T,
    pub p_d: T,
    pub q_d: T,
}

/// Series branch. Impedances are stored in p.u. on the case base.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line<T> {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: T,
    pub x: T,
    /// Apparent-power rating in MVA.
    pub s_max: T,
    pub switchable: bool,
    /// `true` when the line is closed in the normal topology.
    pub normal_status: bool,
}

impl<T: Scalar> Line<T> {
    /// Display name in `from-to` form, e.g. `8-1`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.from_bus, self.to_bus)
    }
}

/// Controllable generator. The reference generator models the grid
/// injection at the interface bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator<T> {
    pub bus: usize,
    pub p_min: T,
    pub p_max: T,
    pub q_min: T,
    pub q_max: T,
    pub is_reference: bool,
}

/// Flexible unit able to regulate P and Q up (produce) or down (consume).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlexUnit<T> {
    pub label: String,
    pub bus: usize,
    pub p_up_max: T,
    pub p_dn_max: T,
    pub q_up_max: T,
    pub q_dn_max: T,
    /// $/MWh of activated active-power regulation.
    pub cost_p: T,
    /// $/MVArh of activated reactive-power regulation.
    pub cost_q: T,
}

/// Optional solver overrides carried in a case file's `[settings]` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CaseSettings {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub multistart: Option<usize>,
}

impl CaseSettings {
    pub fn is_empty(&self) -> bool {
        self.tol.is_none() && self.max_iter.is_none() && self.multistart.is_none()
    }
}

/// Immutable problem instance.
///
/// Powers (demand, generator bounds, flexibility capacities) are kept in
/// physical units exactly as read; [`NetworkCase::to_pu`] converts them on
/// the fly. Line impedances are always p.u.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkCase<T> {
    pub name: String,
    pub s_base: T,
    pub v_base: T,
    pub ref_bus: usize,
    pub buses: Vec<Bus<T>>,
    pub lines: Vec<Line<T>>,
    pub generators: Vec<Generator<T>>,
    pub flex_units: Vec<FlexUnit<T>>,
    pub settings: CaseSettings,
}

impl<T: Scalar> NetworkCase<T> {
    /// Position of bus `id` in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn ref_index(&self) -> usize {
        self.bus_index(self.ref_bus)
            .expect("reference bus present in a parsed case")
    }

    pub fn reference_generator(&self) -> Option<usize> {
        self.generators.iter().position(|g| g.is_reference)
    }

    /// MW (or MVAr / MVA) to p.u.
    #[inline]
    pub fn to_pu(&self, physical: T) -> T {
        physical / self.s_base
    }

    /// p.u. to MW (or MVAr / MVA).
    #[inline]
    pub fn from_pu(&self, pu: T) -> T {
        pu * self.s_base
    }

    /// Impedance base in ohm.
    pub fn z_base(&self) -> T {
        self.v_base * self.v_base / self.s_base
    }

    pub fn switchable_lines(&self) -> Vec<usize> {
        (0..self.lines.len()).filter(|&l| self.lines[l].switchable).collect()
    }

    pub fn total_demand_mw(&self) -> (T, T) {
        self.buses
            .iter()
            .fold((T::zero(), T::zero()), |(p, q), b| (p + b.p_d, q + b.q_d))
    }

    /// Copy with every flexible-unit capacity multiplied by `factor`.
    pub fn scale_flex_capacity(&self, factor: T) -> Self {
        let mut out = self.clone();
        for u in &mut out.flex_units {
            u.p_up_max *= factor;
            u.p_dn_max *= factor;
            u.q_up_max *= factor;
            u.q_dn_max *= factor;
        }
        out
    }
}

/// Series admittance `1 / (r + jx)` split into conductance and susceptance.
pub fn line_admittance<T: Scalar>(line: &Line<T>) -> (T, T) {
    let z2 = line.r * line.r + line.x * line.x;
    (line.r / z2, -line.x / z2)
}
