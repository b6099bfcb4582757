//! Flexibility-area tracing: repeated extreme-point solves of the
//! direction objective assembled into a boundary polygon, and intersection
//! of polygons across configurations.

use rayon::prelude::*;
use serde::Serialize;

use crate::acropf::{build_problem, ObjectiveSpec, QcpProblem};
use crate::config::Configuration;
use crate::error::{FlexError, Result};
use crate::geometry::{self, Point};
use crate::network::NetworkCase;
use crate::nlp::{self, SolveStatus, SolverSettings};
use crate::oracle::{verify_point, OperatingPoint};
use crate::scalar::Scalar;

/// Vertices closer than this (MVA) are merged.
pub const DEDUP_TOL: f64 = 1e-6;
/// Slack (p.u.) under which a limit is reported as binding.
pub const BINDING_TOL: f64 = 1e-6;
/// Perimeter slices at the extreme P values are moved inward by this much
/// (MW) so the pinned problems keep a nonempty interior.
const EDGE_INSET: f64 = 1e-5;
/// Direction offsets (degrees) from the P axis used to find the P range.
const RANGE_FAN_DEG: [f64; 5] = [0.0, 15.0, -15.0, 30.0, -30.0];
/// Further insets tried at the end slices, as fractions of the step.
const EDGE_RETRY_INSETS: [f64; 3] = [1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// One direction solve per angle, uniformly over the circle.
    AngularSweep,
    /// Min/max Q at P slices `step_mva` apart.
    PerimeterStep,
}

impl TraceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceMode::AngularSweep => "angular",
            TraceMode::PerimeterStep => "perimeter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    pub mode: TraceMode,
    /// Number of directions for the angular sweep.
    pub n_points: usize,
    /// P spacing of the perimeter sweep, MW.
    pub step_mva: f64,
    pub settings: SolverSettings,
    /// Oracle tolerance used to flag each vertex.
    pub verify_tol: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            mode: TraceMode::PerimeterStep,
            n_points: 200,
            step_mva: 0.08,
            settings: SolverSettings::default(),
            verify_tol: 1e-5,
        }
    }
}

/// Where on the sweep a vertex came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Angle,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryVertex<T> {
    pub p: T,
    pub q: T,
    /// Angle index or P-slice index.
    pub index: usize,
    pub envelope: Envelope,
    pub status: SolveStatus,
    pub binding: Vec<String>,
    /// A failed solve was skipped just before this vertex.
    pub gap_before: bool,
    /// Oracle re-verification passed at the trace tolerance.
    pub verified: bool,
    pub point: OperatingPoint<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedSolve {
    pub index: usize,
    pub envelope: Envelope,
    pub status: SolveStatus,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlexibilityBoundary<T> {
    pub config_label: String,
    pub mode: TraceMode,
    /// Counterclockwise boundary vertices with solve metadata.
    pub vertices: Vec<BoundaryVertex<T>>,
    /// Interface point with every flexible unit idle.
    pub base_point: Point<T>,
    /// Fewer than three distinct vertices (e.g. no flexibility at all).
    pub degenerate: bool,
    pub failures: Vec<FailedSolve>,
}

impl<T: Scalar> FlexibilityBoundary<T> {
    pub fn polygon(&self) -> Vec<Point<T>> {
        self.vertices.iter().map(|v| (v.p, v.q)).collect()
    }

    pub fn area(&self) -> T {
        if self.degenerate {
            return T::zero();
        }
        geometry::polygon_area(&self.polygon())
    }

    pub fn contains(&self, pt: Point<T>) -> bool {
        geometry::point_in_polygon(pt, &self.polygon())
    }

    /// Inside, or within `tol` MVA of the boundary.
    pub fn contains_within(&self, pt: Point<T>, tol: T) -> bool {
        geometry::contains_within(pt, &self.polygon(), tol)
    }

    /// `(min P, max P, min Q, max Q)` of the vertices.
    pub fn bounding_box(&self) -> (T, T, T, T) {
        let mut b = (T::infinity(), T::neg_infinity(), T::infinity(), T::neg_infinity());
        for v in &self.vertices {
            b.0 = b.0.min(v.p);
            b.1 = b.1.max(v.p);
            b.2 = b.2.min(v.q);
            b.3 = b.3.max(v.q);
        }
        b
    }
}

struct Extreme<T> {
    index: usize,
    envelope: Envelope,
    status: SolveStatus,
    message: String,
    x: Vec<T>,
    problem: QcpProblem<T>,
}

fn solve_extreme<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    objective: ObjectiveSpec<T>,
    settings: &SolverSettings,
    warm: Option<&[T]>,
    index: usize,
    envelope: Envelope,
) -> Result<Extreme<T>> {
    let problem = build_problem(case, config, objective)?;
    let sol = nlp::solve(&problem, settings, warm);
    Ok(Extreme {
        index,
        envelope,
        status: sol.status,
        message: sol.message,
        x: sol.x,
        problem,
    })
}

/// Interface point with all flexibility idle. Among the (usually unique)
/// feasible points, the one with least interface P, i.e. least losses.
pub fn base_point<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    settings: &SolverSettings,
) -> Result<(Point<T>, OperatingPoint<T>)> {
    let idle = case.scale_flex_capacity(T::zero());
    let problem = build_problem(&idle, config, ObjectiveSpec::direction(T::one(), T::zero())?)?;
    let sol = nlp::solve(&problem, settings, None);
    if !sol.is_optimal() {
        return Err(FlexError::TraceFailure {
            config: config.label.clone(),
            details: format!("base point not solvable ({:?}: {})", sol.status, sol.message),
        });
    }
    Ok((problem.interface_mw(&sol.x), problem.operating_point(&sol.x)))
}

/// Traces the flexibility area of one configuration.
pub fn trace_boundary<T: Scalar>(
    case: &NetworkCase<T>,
    config: &Configuration,
    opts: &TraceOptions,
) -> Result<FlexibilityBoundary<T>> {
    let fail = |details: String| FlexError::TraceFailure {
        config: config.label.clone(),
        details,
    };
    match opts.mode {
        TraceMode::AngularSweep if opts.n_points < 8 => {
            return Err(fail(format!("need at least 8 directions, got {}", opts.n_points)))
        }
        TraceMode::PerimeterStep if !(opts.step_mva > 0.0 && opts.step_mva.is_finite()) => {
            return Err(fail("step must be positive".into()))
        }
        _ => {}
    }
    let (base, _) = base_point(case, config, &opts.settings)?;
    let s = &opts.settings;

    let extremes: Vec<Extreme<T>> = match opts.mode {
        TraceMode::AngularSweep => {
            let n = opts.n_points;
            (0..n)
                .into_par_iter()
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / n as f64;
                    // minimizing -(cos, sin)·(P, Q) pushes outward along θ
                    let obj = ObjectiveSpec::direction(T::lit(-th.cos()), T::lit(-th.sin()))?;
                    solve_extreme(case, config, obj, s, None, k, Envelope::Angle)
                })
                .collect::<Result<_>>()?
        }
        TraceMode::PerimeterStep => {
            // Extreme P is nonconvex (it maximizes losses on one side), so
            // the range comes from a small fan of directions per side.
            let fan: Vec<(bool, f64)> = [false, true]
                .into_iter()
                .flat_map(|right| RANGE_FAN_DEG.iter().map(move |&d| (right, d)))
                .collect();
            let probes: Vec<(bool, Extreme<T>)> = fan
                .into_par_iter()
                .map(|(right, deg)| {
                    let a = deg.to_radians();
                    let w_p = if right { -a.cos() } else { a.cos() };
                    let obj = ObjectiveSpec::direction(T::lit(w_p), T::lit(a.sin()))?;
                    Ok((right, solve_extreme(case, config, obj, s, None, 0, Envelope::Angle)?))
                })
                .collect::<Result<_>>()?;
            let pick = |right: bool| {
                probes
                    .iter()
                    .filter(|(r, e)| *r == right && e.status == SolveStatus::Optimal)
                    .map(|(_, e)| (e.problem.interface_mw(&e.x).0.as_f64(), e))
                    .reduce(|a, b| if (b.0 > a.0) == right { b } else { a })
            };
            let (Some((p_lo, left)), Some((p_hi, right))) = (pick(false), pick(true)) else {
                let msg: Vec<String> = probes
                    .iter()
                    .map(|(_, e)| format!("{:?}: {}", e.status, e.message))
                    .collect();
                return Err(fail(format!("P-range solves failed: {}", msg.join("; "))));
            };
            let (x_left, x_right) = (left.x.clone(), right.x.clone());
            let axis = vec![
                solve_extreme(case, config, left.problem.objective, s, None, 0, Envelope::Angle)?,
                solve_extreme(case, config, right.problem.objective, s, None, 0, Envelope::Angle)?,
            ];
            let slices = perimeter_slices(p_lo, p_hi, opts.step_mva);
            if slices.is_empty() {
                // no P range to speak of: the axis points are the area
                axis
            } else {
                let last = slices.len() - 1;
                let slice_obj = |p: f64, env: Envelope| {
                    let w_q = if env == Envelope::Lower { T::one() } else { -T::one() };
                    ObjectiveSpec::pinned_direction(T::zero(), w_q, Some(T::lit(p)))
                };
                let tasks: Vec<(usize, Envelope)> = (0..slices.len())
                    .flat_map(|k| [(k, Envelope::Lower), (k, Envelope::Upper)])
                    .collect();
                let mut solved: Vec<Extreme<T>> = tasks
                    .into_par_iter()
                    .map(|(k, env)| solve_extreme(case, config, slice_obj(slices[k], env)?, s, None, k, env))
                    .collect::<Result<_>>()?;
                // Repair pass, in index order: warm start from the nearest
                // solved slice on the same envelope (the end slices from the
                // P-range extremes, next to which the feasible Q interval can
                // be very thin), and move end slices further inward.
                for i in 0..solved.len() {
                    if solved[i].status == SolveStatus::Optimal {
                        continue;
                    }
                    let (k, env) = (solved[i].index, solved[i].envelope);
                    let warm: Option<Vec<T>> = if k == 0 {
                        Some(x_left.clone())
                    } else if k == last {
                        Some(x_right.clone())
                    } else {
                        solved
                            .iter()
                            .filter(|e| e.envelope == env && e.status == SolveStatus::Optimal)
                            .min_by_key(|e| e.index.abs_diff(k))
                            .map(|e| e.x.clone())
                    };
                    let mut ps = vec![slices[k]];
                    if k == 0 || k == last {
                        let room = (p_hi - p_lo) / 2.0;
                        for inset in EDGE_RETRY_INSETS {
                            let inset = (inset * opts.step_mva).min(room);
                            ps.push(if k == 0 { p_lo + inset } else { p_hi - inset });
                        }
                    }
                    for p in ps {
                        let e = solve_extreme(case, config, slice_obj(p, env)?, s, warm.as_deref(), k, env)?;
                        let ok = e.status == SolveStatus::Optimal;
                        solved[i] = e;
                        if ok {
                            break;
                        }
                    }
                }
                // lower envelope left to right, then upper right to left
                let (mut ring, upper): (Vec<_>, Vec<_>) =
                    solved.into_iter().partition(|e| e.envelope == Envelope::Lower);
                ring.extend(upper.into_iter().rev());
                ring
            }
        }
    };

    let mut vertices: Vec<BoundaryVertex<T>> = Vec::new();
    let mut failures = Vec::new();
    let mut gap = false;
    let mut successes = 0usize;
    let checked: Vec<Option<BoundaryVertex<T>>> = extremes
        .par_iter()
        .map(|e| {
            if e.status != SolveStatus::Optimal {
                return Ok(None);
            }
            let (p, q) = e.problem.interface_mw(&e.x);
            let point = e.problem.operating_point(&e.x);
            let verified = verify_point(case, config, &point, opts.verify_tol)?.passed;
            Ok(Some(BoundaryVertex {
                p,
                q,
                index: e.index,
                envelope: e.envelope,
                status: e.status,
                binding: e.problem.binding_constraints(&e.x, T::lit(BINDING_TOL)),
                gap_before: false,
                verified,
                point,
            }))
        })
        .collect::<Result<_>>()?;
    for (e, v) in extremes.iter().zip(checked) {
        match v {
            None => {
                failures.push(FailedSolve {
                    index: e.index,
                    envelope: e.envelope,
                    status: e.status,
                    message: e.message.clone(),
                });
                gap = true;
            }
            Some(mut v) => {
                successes += 1;
                v.gap_before = gap;
                gap = false;
                let dup = vertices.last().map_or(false, |w| close(w, &v));
                if !dup {
                    vertices.push(v);
                }
            }
        }
    }
    if gap {
        if let Some(first) = vertices.first_mut() {
            first.gap_before = true;
        }
    }
    while vertices.len() > 1 && close(&vertices[0], vertices.last().unwrap()) {
        vertices.pop();
    }
    // a collapsed P range leaves only the two axis solves
    if successes < extremes.len().min(3) {
        let diag: Vec<String> = failures
            .iter()
            .map(|f| format!("#{} {:?} {:?}: {}", f.index, f.envelope, f.status, f.message))
            .collect();
        return Err(fail(format!(
            "{successes} successful extreme solves; failures: {}",
            diag.join("; ")
        )));
    }
    let mut degenerate = vertices.len() < 3;
    if !degenerate {
        let poly: Vec<Point<T>> = vertices.iter().map(|v| (v.p, v.q)).collect();
        degenerate = geometry::polygon_area(&poly) <= T::lit(DEDUP_TOL * DEDUP_TOL);
        if geometry::signed_area2(&poly) < T::zero() {
            vertices.reverse();
        }
    }
    Ok(FlexibilityBoundary {
        config_label: config.label.clone(),
        mode: opts.mode,
        vertices,
        base_point: base,
        degenerate,
        failures,
    })
}

fn close<T: Scalar>(a: &BoundaryVertex<T>, b: &BoundaryVertex<T>) -> bool {
    let d = ((a.p - b.p).powi(2) + (a.q - b.q).powi(2)).sqrt();
    d.as_f64() <= DEDUP_TOL
}

/// P values of the perimeter slices: `p_lo + k·step`, the last slice at
/// `p_hi`, both ends moved inward by [`EDGE_INSET`].
fn perimeter_slices(p_lo: f64, p_hi: f64, step: f64) -> Vec<f64> {
    if p_hi - p_lo <= 2.0 * EDGE_INSET {
        return vec![];
    }
    let mut out = vec![p_lo + EDGE_INSET];
    let mut k = 1usize;
    loop {
        let p = p_lo + k as f64 * step;
        if p >= p_hi - EDGE_INSET - 1e-9 * step {
            break;
        }
        out.push(p);
        k += 1;
    }
    out.push(p_hi - EDGE_INSET);
    out
}

/// Intersection of configuration areas ("secure" area).
#[derive(Debug, Clone, Serialize)]
pub struct SecureArea<T> {
    /// Counterclockwise rings; a nonconvex intersection may fall apart into
    /// several pieces, and an empty list means no common area.
    pub rings: Vec<Vec<Point<T>>>,
    pub contributing: Vec<String>,
}

impl<T: Scalar> SecureArea<T> {
    /// Largest ring (empty if there is none).
    pub fn vertices(&self) -> Vec<Point<T>> {
        self.rings
            .iter()
            .max_by(|a, b| {
                geometry::polygon_area(a)
                    .partial_cmp(&geometry::polygon_area(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .cloned()
            .unwrap_or_default()
    }

    pub fn area(&self) -> T {
        self.rings
            .iter()
            .fold(T::zero(), |a, r| a + geometry::polygon_area(r))
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn contains(&self, pt: Point<T>) -> bool {
        self.rings.iter().any(|r| geometry::point_in_polygon(pt, r))
    }
}

/// Intersects the given boundaries. A degenerate boundary has no area, so
/// the secure area is then empty.
pub fn intersect_areas<T: Scalar>(boundaries: &[FlexibilityBoundary<T>]) -> Result<SecureArea<T>> {
    if boundaries.is_empty() {
        return Err(FlexError::InvalidGrid("no boundaries to intersect".into()));
    }
    let contributing = boundaries.iter().map(|b| b.config_label.clone()).collect();
    if boundaries.iter().any(|b| b.degenerate) {
        return Ok(SecureArea {
            rings: vec![],
            contributing,
        });
    }
    let polys: Vec<Vec<Point<T>>> = boundaries.iter().map(|b| b.polygon()).collect();
    Ok(SecureArea {
        rings: geometry::intersect_all(&polys)?,
        contributing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_cover_the_range() {
        let s = perimeter_slices(0.0, 1.0, 0.25);
        assert_eq!(s.len(), 5);
        assert!((s[0] - EDGE_INSET).abs() < 1e-15);
        assert!((s[2] - 0.5).abs() < 1e-15);
        assert!((s[4] - (1.0 - EDGE_INSET)).abs() < 1e-15);
        assert_eq!(perimeter_slices(0.3, 0.3, 0.1), Vec::<f64>::new());
        // a remainder shorter than the step still gets its own end slice
        let s = perimeter_slices(0.0, 1.05, 0.25);
        assert_eq!(s.len(), 6);
    }
}
