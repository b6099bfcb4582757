use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::NetworkCase;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    VoltageBoundsInverted,
    VoltageBoundNonPositive,
    NonFiniteDemand,
    DuplicateBus,
    DanglingReference,
    SelfLoop,
    NegativeResistance,
    ZeroImpedance,
    NonPositiveRating,
    ParallelLines,
    GeneratorBoundsInverted,
    ReferenceGeneratorCount,
    ReferenceGeneratorMisplaced,
    NegativeCapacity,
    NegativeCost,
    Disconnected,
}

impl DiagnosticKind {
    pub fn describe(self) -> &'static str {
        match self {
            DiagnosticKind::VoltageBoundsInverted => "voltage bounds inverted",
            DiagnosticKind::VoltageBoundNonPositive => "voltage lower bound not positive",
            DiagnosticKind::NonFiniteDemand => "demand not finite",
            DiagnosticKind::DuplicateBus => "duplicate bus id",
            DiagnosticKind::DanglingReference => "reference to nonexistent bus",
            DiagnosticKind::SelfLoop => "line connects a bus to itself",
            DiagnosticKind::NegativeResistance => "negative resistance",
            DiagnosticKind::ZeroImpedance => "zero impedance",
            DiagnosticKind::NonPositiveRating => "line rating not positive",
            DiagnosticKind::ParallelLines => "parallel lines must be merged",
            DiagnosticKind::GeneratorBoundsInverted => "generator bounds inverted",
            DiagnosticKind::ReferenceGeneratorCount => "exactly one reference generator required",
            DiagnosticKind::ReferenceGeneratorMisplaced => "reference generator not at ref_bus",
            DiagnosticKind::NegativeCapacity => "negative flexibility capacity",
            DiagnosticKind::NegativeCost => "negative flexibility cost",
            DiagnosticKind::Disconnected => "normal topology disconnected",
        }
    }
}

/// One violated invariant and the element it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub element: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.kind.describe(), self.element)
    }
}

/// Lists every invariant the case violates; empty means valid.
pub fn validate_case<T: Scalar>(case: &NetworkCase<T>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |kind, element: String| out.push(Diagnostic { kind, element });

    let mut ids = BTreeSet::new();
    for b in &case.buses {
        let el = format!("bus {}", b.id);
        if !ids.insert(b.id) {
            push(DiagnosticKind::DuplicateBus, el.clone());
        }
        if b.v_min <= T::zero() {
            push(DiagnosticKind::VoltageBoundNonPositive, el.clone());
        }
        if b.v_min >= b.v_max {
            push(DiagnosticKind::VoltageBoundsInverted, el.clone());
        }
        if !b.p_d.is_finite() || !b.q_d.is_finite() {
            push(DiagnosticKind::NonFiniteDemand, el);
        }
    }
    if !ids.contains(&case.ref_bus) {
        push(
            DiagnosticKind::DanglingReference,
            format!("ref_bus {}", case.ref_bus),
        );
    }

    let mut pairs = BTreeSet::new();
    for l in &case.lines {
        let el = format!("line {}", l.name());
        for end in [l.from_bus, l.to_bus] {
            if !ids.contains(&end) {
                push(DiagnosticKind::DanglingReference, format!("{el} -> bus {end}"));
            }
        }
        if l.from_bus == l.to_bus {
            push(DiagnosticKind::SelfLoop, el.clone());
        }
        if l.r < T::zero() {
            push(DiagnosticKind::NegativeResistance, el.clone());
        }
        if l.r.abs() + l.x.abs() <= T::zero() {
            push(DiagnosticKind::ZeroImpedance, el.clone());
        }
        if l.s_max <= T::zero() {
            push(DiagnosticKind::NonPositiveRating, el.clone());
        }
        let key = (l.from_bus.min(l.to_bus), l.from_bus.max(l.to_bus));
        if !pairs.insert(key) {
            push(DiagnosticKind::ParallelLines, el);
        }
    }

    let mut n_ref = 0;
    for (i, g) in case.generators.iter().enumerate() {
        let el = format!("generator {i} at bus {}", g.bus);
        if !ids.contains(&g.bus) {
            push(DiagnosticKind::DanglingReference, el.clone());
        }
        if g.p_min > g.p_max || g.q_min > g.q_max {
            push(DiagnosticKind::GeneratorBoundsInverted, el.clone());
        }
        if g.is_reference {
            n_ref += 1;
            if g.bus != case.ref_bus {
                push(DiagnosticKind::ReferenceGeneratorMisplaced, el);
            }
        }
    }
    if n_ref != 1 {
        push(
            DiagnosticKind::ReferenceGeneratorCount,
            format!("{n_ref} reference generators"),
        );
    }

    for u in &case.flex_units {
        let el = format!("flex unit {}", u.label);
        if !ids.contains(&u.bus) {
            push(DiagnosticKind::DanglingReference, format!("{el} -> bus {}", u.bus));
        }
        if [u.p_up_max, u.p_dn_max, u.q_up_max, u.q_dn_max]
            .iter()
            .any(|c| *c < T::zero())
        {
            push(DiagnosticKind::NegativeCapacity, el.clone());
        }
        if u.cost_p < T::zero() || u.cost_q < T::zero() {
            push(DiagnosticKind::NegativeCost, el);
        }
    }

    let in_service: Vec<usize> = (0..case.lines.len())
        .filter(|&l| case.lines[l].normal_status)
        .collect();
    let unreached = crate::config::unreachable_buses(case, &in_service);
    if !unreached.is_empty() {
        let list: Vec<String> = unreached.iter().map(|b| b.to_string()).collect();
        push(
            DiagnosticKind::Disconnected,
            format!("buses {} unreachable from {}", list.join(","), case.ref_bus),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn bundled_case_is_clean() {
        let case = cases::uk38::<f64>();
        assert_eq!(validate_case(&case), vec![]);
    }

    #[test]
    fn inverted_voltage_bounds() {
        let mut case = cases::two_bus::<f64>(0.01, 0.03, 1.0, 0.5);
        case.buses[1].v_min = 1.1;
        case.buses[1].v_max = 0.9;
        let d = validate_case(&case);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::VoltageBoundsInverted);
        assert_eq!(d[0].to_string(), "voltage bounds inverted (bus 2)");
    }

    #[test]
    fn isolated_bus() {
        let mut case = cases::two_bus::<f64>(0.01, 0.03, 1.0, 0.5);
        case.lines[0].normal_status = false;
        let d = validate_case(&case);
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::Disconnected
            && d.kind.describe() == "normal topology disconnected"));
    }

    #[test]
    fn parallel_and_misplaced_reference() {
        let mut case = cases::two_bus::<f64>(0.01, 0.03, 1.0, 0.5);
        let mut dup = case.lines[0].clone();
        std::mem::swap(&mut dup.from_bus, &mut dup.to_bus);
        case.lines.push(dup);
        case.generators[0].bus = 2;
        let kinds: Vec<_> = validate_case(&case).into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::ParallelLines));
        assert!(kinds.contains(&DiagnosticKind::ReferenceGeneratorMisplaced));
    }
}
