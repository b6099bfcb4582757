//! On-disk shapes of traces and cost surfaces, and their CSV renderings.

use adnflex::boundary::{Envelope, TraceMode};
use adnflex::dispatch::SurfaceComparison;
use adnflex::network::FlexUnit;
use adnflex::{CostSurface, FlexibilityBoundary, OperatingPoint, SecureArea};
use serde::{Deserialize, Serialize};

/// Full-precision CSV number (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn line(cols: &[String]) -> String {
    let mut s = cols.iter().map(|c| field(c)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexRecord {
    pub index: usize,
    pub envelope: String,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub status: String,
    pub binding: Vec<String>,
    pub gap_before: bool,
    pub verified: bool,
    pub point: OperatingPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedRecord {
    pub index: usize,
    pub envelope: String,
    pub status: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub config_label: String,
    pub mode: String,
    /// Directions in an angular sweep; zero for perimeter traces.
    pub n_directions: usize,
    pub base_point: [f64; 2],
    pub degenerate: bool,
    pub area_mva2: f64,
    pub vertices: Vec<VertexRecord>,
    pub failures: Vec<FailedRecord>,
}

fn envelope_name(e: Envelope) -> &'static str {
    match e {
        Envelope::Angle => "angle",
        Envelope::Lower => "lower",
        Envelope::Upper => "upper",
    }
}

pub fn mode_name(m: TraceMode) -> &'static str {
    match m {
        TraceMode::AngularSweep => "angular",
        TraceMode::PerimeterStep => "perimeter",
    }
}

impl BoundaryRecord {
    pub fn new(b: &FlexibilityBoundary, n_directions: usize) -> Self {
        BoundaryRecord {
            config_label: b.config_label.clone(),
            mode: mode_name(b.mode).into(),
            n_directions: if b.mode == TraceMode::AngularSweep { n_directions } else { 0 },
            base_point: [b.base_point.0, b.base_point.1],
            degenerate: b.degenerate,
            area_mva2: b.area(),
            vertices: b
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    index: v.index,
                    envelope: envelope_name(v.envelope).into(),
                    p_mw: v.p,
                    q_mvar: v.q,
                    status: format!("{:?}", v.status),
                    binding: v.binding.clone(),
                    gap_before: v.gap_before,
                    verified: v.verified,
                    point: v.point.clone(),
                })
                .collect(),
            failures: b
                .failures
                .iter()
                .map(|f| FailedRecord {
                    index: f.index,
                    envelope: envelope_name(f.envelope).into(),
                    status: format!("{:?}", f.status),
                    message: f.message.clone(),
                })
                .collect(),
        }
    }

    /// One row per vertex in ring order, then one per failed solve.
    pub fn csv(&self) -> String {
        let mut out = line(&[
            "config_label", "theta_or_step_index", "P_MW", "Q_MVAr", "status", "binding_tags",
        ]
        .map(String::from));
        let pos = |index: usize| {
            if self.n_directions > 0 {
                num(std::f64::consts::TAU * index as f64 / self.n_directions as f64)
            } else {
                index.to_string()
            }
        };
        for v in &self.vertices {
            out += &line(&[
                self.config_label.clone(),
                pos(v.index),
                num(v.p_mw),
                num(v.q_mvar),
                v.status.clone(),
                v.binding.join(";"),
            ]);
        }
        for f in &self.failures {
            out += &line(&[
                self.config_label.clone(),
                pos(f.index),
                String::new(),
                String::new(),
                f.status.clone(),
                String::new(),
            ]);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRecord {
    pub p_min: f64,
    pub q_min: f64,
    pub step: f64,
    pub n_p: usize,
    pub n_q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub i: usize,
    pub j: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub feasible: bool,
    pub status: String,
    pub total_cost: f64,
    /// `(p_up, p_dn, q_up, q_dn)` per unit.
    pub regulations: Vec<[f64; 4]>,
    pub binding: Vec<String>,
    pub point: Option<OperatingPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub config_label: String,
    pub grid: GridRecord,
    pub units: Vec<String>,
    pub feasible_nodes: usize,
    pub nodes: Vec<NodeRecord>,
    pub failures: Vec<String>,
}

impl SurfaceRecord {
    pub fn new(s: &CostSurface, units: &[FlexUnit<f64>]) -> Self {
        let g = s.grid;
        SurfaceRecord {
            config_label: s.config_label.clone(),
            grid: GridRecord { p_min: g.p_min, q_min: g.q_min, step: g.step, n_p: g.n_p, n_q: g.n_q },
            units: units.iter().map(|u| u.label.clone()).collect(),
            feasible_nodes: s.feasible_count(),
            nodes: s
                .nodes
                .iter()
                .enumerate()
                .map(|(k, n)| NodeRecord {
                    i: k % g.n_p,
                    j: k / g.n_p,
                    p_mw: n.target.p_ref,
                    q_mvar: n.target.q_ref,
                    feasible: n.feasible,
                    status: format!("{:?}", n.status),
                    total_cost: n.total_cost,
                    regulations: n.regulations.clone(),
                    binding: n.binding.clone(),
                    point: n.point.clone(),
                })
                .collect(),
            failures: s
                .failures
                .iter()
                .map(|f| format!("({}, {}) P={} Q={}: {}", f.i, f.j, f.p_mw, f.q_mvar, f.details))
                .collect(),
        }
    }

    pub fn csv(&self) -> String {
        let mut head: Vec<String> = ["P_MW", "Q_MVAr", "feasible", "total_cost"].map(String::from).to_vec();
        for u in &self.units {
            for k in ["p_up", "p_dn", "q_up", "q_dn"] {
                head.push(format!("{u}_{k}"));
            }
        }
        let mut out = line(&head);
        for n in &self.nodes {
            let mut row = vec![num(n.p_mw), num(n.q_mvar), n.feasible.to_string(), num(n.total_cost)];
            row.extend(n.regulations.iter().flatten().map(|&r| num(r)));
            out += &line(&row);
        }
        out
    }
}

pub fn comparison_csv(c: &SurfaceComparison) -> String {
    let mut out = line(&["P_MW", "Q_MVAr", "feasible_a", "feasible_b", "savings"].map(String::from));
    for n in &c.nodes {
        out += &line(&[
            num(n.p_mw),
            num(n.q_mvar),
            n.feasible_a.to_string(),
            n.feasible_b.to_string(),
            n.savings.map(num).unwrap_or_default(),
        ]);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecureRecord {
    pub contributing: Vec<String>,
    /// Configurations dropped because no operating point exists at all.
    pub infeasible: Vec<String>,
    pub area_mva2: f64,
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl SecureRecord {
    pub fn new(s: &SecureArea, infeasible: Vec<String>) -> Self {
        SecureRecord {
            contributing: s.contributing.clone(),
            infeasible,
            area_mva2: s.area(),
            rings: s.rings.iter().map(|r| r.iter().map(|p| [p.0, p.1]).collect()).collect(),
        }
    }

    pub fn csv(&self) -> String {
        let mut out = line(&["ring", "vertex", "P_MW", "Q_MVAr"].map(String::from));
        for (k, r) in self.rings.iter().enumerate() {
            for (i, p) in r.iter().enumerate() {
                out += &line(&[k.to_string(), i.to_string(), num(p[0]), num(p[1])]);
            }
        }
        out
    }
}
