//! Switch configurations: enumeration of connected line-status assignments
//! and the fixed topology each one induces.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{FlexError, Result};
use crate::network::NetworkCase;
use crate::scalar::Scalar;

/// Default cap on switchable lines for exhaustive enumeration.
pub const DEFAULT_SWITCH_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Radial,
    Meshed,
}

/// On/off assignment for every switchable line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Configuration {
    /// Switchable line index (into `case.lines`) to closed (`true`) / open.
    pub statuses: BTreeMap<usize, bool>,
    pub label: String,
    pub topology: Topology,
}

impl Configuration {
    /// Statuses of the normal topology.
    pub fn normal<T: Scalar>(case: &NetworkCase<T>) -> Self {
        let statuses = case
            .switchable_lines()
            .into_iter()
            .map(|l| (l, case.lines[l].normal_status))
            .collect();
        Self::labelled(case, statuses)
    }

    /// Builds a configuration from statuses, deriving label and topology.
    pub fn labelled<T: Scalar>(case: &NetworkCase<T>, statuses: BTreeMap<usize, bool>) -> Self {
        let label = derive_label(case, &statuses);
        let mut cfg = Configuration {
            statuses,
            label,
            topology: Topology::Radial,
        };
        let n_lines = effective_topology(case, &cfg).len();
        if n_lines + 1 > case.buses.len() {
            cfg.topology = Topology::Meshed;
        }
        cfg
    }

    pub fn is_line_on<T: Scalar>(&self, case: &NetworkCase<T>, line: usize) -> bool {
        match self.statuses.get(&line) {
            Some(on) => *on,
            None => case.lines[line].normal_status,
        }
    }

    /// Whether this is the normal topology (every switch at its normal status).
    pub fn is_normal<T: Scalar>(&self, case: &NetworkCase<T>) -> bool {
        self.statuses
            .iter()
            .all(|(l, on)| case.lines[*l].normal_status == *on)
    }

    /// Normal-operation configurations keep every sectionalising switch
    /// closed; opening one is a contingency.
    pub fn is_contingency<T: Scalar>(&self, case: &NetworkCase<T>) -> bool {
        self.statuses
            .iter()
            .any(|(l, on)| case.lines[*l].normal_status && !*on)
    }
}

/// Label rules:
/// * normal statuses -> `NOP-open` (or `normal` without tie switches);
/// * every tie and sectionaliser closed -> `NOP-closed`;
/// * ties closed with only feeder-head switches open -> `feeder-<k>-only`,
///   feeders numbered by the order of their head line in the case;
/// * anything else -> list of switches toggled from normal.
fn derive_label<T: Scalar>(case: &NetworkCase<T>, statuses: &BTreeMap<usize, bool>) -> String {
    let normal = statuses
        .iter()
        .all(|(l, on)| case.lines[*l].normal_status == *on);
    let ties: Vec<usize> = statuses
        .keys()
        .copied()
        .filter(|l| !case.lines[*l].normal_status)
        .collect();
    if normal {
        return if ties.is_empty() { "normal" } else { "NOP-open" }.to_string();
    }
    let ties_closed = ties.iter().all(|l| statuses[l]);
    let opened: Vec<usize> = statuses
        .iter()
        .filter(|(l, on)| case.lines[**l].normal_status && !**on)
        .map(|(l, _)| *l)
        .collect();
    if ties_closed && opened.is_empty() {
        return "NOP-closed".to_string();
    }
    let heads: Vec<usize> = (0..case.lines.len())
        .filter(|&l| {
            let line = &case.lines[l];
            line.normal_status && (line.from_bus == case.ref_bus || line.to_bus == case.ref_bus)
        })
        .collect();
    if ties_closed && opened.iter().all(|l| heads.contains(l)) {
        let live: Vec<String> = heads
            .iter()
            .enumerate()
            .filter(|(_, l)| !opened.contains(l))
            .map(|(k, _)| (k + 1).to_string())
            .collect();
        return format!("feeder-{}-only", live.join("+"));
    }
    let mut parts = Vec::new();
    for (l, on) in statuses {
        if case.lines[*l].normal_status != *on {
            let verb = if *on { "close" } else { "open" };
            parts.push(format!("{verb}:{}", case.lines[*l].name()));
        }
    }
    parts.join(",")
}

/// Line indices in service under `config`, in case order.
pub fn effective_topology<T: Scalar>(case: &NetworkCase<T>, config: &Configuration) -> Vec<usize> {
    (0..case.lines.len())
        .filter(|&l| config.is_line_on(case, l))
        .collect()
}

/// Bus ids not reachable from the reference bus over `in_service` lines.
pub(crate) fn unreachable_buses<T: Scalar>(case: &NetworkCase<T>, in_service: &[usize]) -> Vec<usize> {
    let n = case.buses.len();
    let Some(root) = case.bus_index(case.ref_bus) else {
        return case.buses.iter().map(|b| b.id).collect();
    };
    let mut adj = vec![Vec::new(); n];
    for &l in in_service {
        let line = &case.lines[l];
        if let (Some(a), Some(b)) = (case.bus_index(line.from_bus), case.bus_index(line.to_bus)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(k) = queue.pop_front() {
        for &j in &adj[k] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).filter(|&k| !seen[k]).map(|k| case.buses[k].id).collect()
}

/// True iff every bus is reachable from the reference bus.
pub fn is_connected<T: Scalar>(case: &NetworkCase<T>, config: &Configuration) -> bool {
    unreachable_buses(case, &effective_topology(case, config)).is_empty()
}

/// Every connected assignment over the switchable lines, in lexicographic
/// order of the status vector (lowest line index most significant, off
/// before on).
pub fn enumerate_configurations<T: Scalar>(
    case: &NetworkCase<T>,
    cap: usize,
) -> Result<Vec<Configuration>> {
    let switches = case.switchable_lines();
    if switches.len() > cap {
        return Err(FlexError::TooManySwitches {
            count: switches.len(),
            cap,
        });
    }
    let k = switches.len();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << k) {
        let statuses: BTreeMap<usize, bool> = switches
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, mask >> (k - 1 - i) & 1 == 1))
            .collect();
        let probe = Configuration {
            statuses: statuses.clone(),
            label: String::new(),
            topology: Topology::Radial,
        };
        if is_connected(case, &probe) {
            out.push(Configuration::labelled(case, statuses));
        }
    }
    Ok(out)
}

/// Looks a configuration up by label.
pub fn find_configuration<'a>(configs: &'a [Configuration], label: &str) -> Result<&'a Configuration> {
    configs
        .iter()
        .find(|c| c.label == label)
        .ok_or_else(|| FlexError::UnknownConfiguration(label.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn labels(configs: &[Configuration]) -> Vec<&str> {
        configs.iter().map(|c| c.label.as_str()).collect()
    }

    fn line_index(case: &NetworkCase<f64>, a: usize, b: usize) -> usize {
        case.lines
            .iter()
            .position(|l| (l.from_bus, l.to_bus) == (a, b) || (l.from_bus, l.to_bus) == (b, a))
            .unwrap()
    }

    #[test]
    fn bundled_case_has_four_configurations() {
        let case = cases::uk38::<f64>();
        let configs = enumerate_configurations(&case, DEFAULT_SWITCH_CAP).unwrap();
        let mut got = labels(&configs);
        got.sort();
        assert_eq!(got, vec!["NOP-closed", "NOP-open", "feeder-1-only", "feeder-2-only"]);
        let head1 = line_index(&case, 8, 1);
        let head7 = line_index(&case, 8, 7);
        let f1 = find_configuration(&configs, "feeder-1-only").unwrap();
        assert!(!f1.statuses[&head1] && f1.statuses[&head7]);
        let f2 = find_configuration(&configs, "feeder-2-only").unwrap();
        assert!(f2.statuses[&head1] && !f2.statuses[&head7]);
        for c in &configs {
            assert!(is_connected(&case, c));
            let n = effective_topology(&case, c).len();
            let radial = n + 1 == case.buses.len();
            assert_eq!(radial, c.topology == Topology::Radial, "{}", c.label);
        }
        assert_eq!(
            find_configuration(&configs, "NOP-closed").unwrap().topology,
            Topology::Meshed
        );
        assert!(configs.iter().any(|c| c.is_normal(&case)));
    }

    #[test]
    fn effective_line_counts() {
        let case = cases::uk38::<f64>();
        let configs = enumerate_configurations(&case, DEFAULT_SWITCH_CAP).unwrap();
        let open = find_configuration(&configs, "NOP-open").unwrap();
        let closed = find_configuration(&configs, "NOP-closed").unwrap();
        assert_eq!(effective_topology(&case, open).len(), 37);
        assert_eq!(effective_topology(&case, closed).len(), 38);
        assert_eq!(effective_topology(&case, closed), (0..case.lines.len()).collect::<Vec<_>>());
    }

    #[test]
    fn isolating_assignment_is_rejected() {
        let case = cases::uk38::<f64>();
        let mut cfg = Configuration::normal(&case);
        assert!(is_connected(&case, &cfg));
        cfg.statuses.insert(line_index(&case, 8, 1), false);
        assert!(!is_connected(&case, &cfg));
        let mut all_on = Configuration::normal(&case);
        for v in all_on.statuses.values_mut() {
            *v = true;
        }
        assert!(is_connected(&case, &all_on));
    }

    #[test]
    fn no_switches_gives_normal_only() {
        let case = cases::two_bus::<f64>(0.01, 0.03, 1.0, 0.5);
        let configs = enumerate_configurations(&case, DEFAULT_SWITCH_CAP).unwrap();
        assert_eq!(labels(&configs), vec!["normal"]);
        assert_eq!(configs[0].topology, Topology::Radial);
    }

    #[test]
    fn single_switch_that_isolates() {
        let mut case = cases::two_bus::<f64>(0.01, 0.03, 1.0, 0.5);
        case.lines[0].switchable = true;
        let configs = enumerate_configurations(&case, DEFAULT_SWITCH_CAP).unwrap();
        assert_eq!(configs.len(), 1);
        assert!(configs[0].statuses[&0]);
        let mut off = configs[0].clone();
        off.statuses.insert(0, false);
        assert!(!is_connected(&case, &off));
    }

    #[test]
    fn enumeration_cap() {
        let case = cases::uk38::<f64>();
        assert!(matches!(
            enumerate_configurations(&case, 2),
            Err(FlexError::TooManySwitches { count: 3, cap: 2 })
        ));
    }
}
