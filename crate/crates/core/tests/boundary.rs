use adnflex::boundary::{intersect_areas, trace_boundary, TraceMode, TraceOptions};
use adnflex::cases;
use adnflex::config::{enumerate_configurations, find_configuration, Configuration};
use adnflex::geometry::{centroid, contains_within, convex_hull, polygon_area, Point};
use adnflex::network::FlexUnit;
use adnflex::oracle::ac_power_flow;
use adnflex::{FlexError, FlexibilityBoundary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 0.08;

fn unit(label: &str, bus: usize, cap: f64) -> FlexUnit<f64> {
    FlexUnit {
        label: label.into(),
        bus,
        p_up_max: cap,
        p_dn_max: cap,
        q_up_max: cap,
        q_dn_max: cap,
        cost_p: 300.0,
        cost_q: 150.0,
    }
}

fn stiff_two_bus() -> adnflex::NetworkCase {
    let mut case = cases::two_bus::<f64>(1e-4, 1e-4, 0.5, 0.2);
    case.flex_units.push(unit("U", 2, 1.0));
    case
}

#[test]
fn stiff_two_bus_gives_the_capacity_box() {
    let case = stiff_two_bus();
    let c = Configuration::normal(&case);
    // brute force: the four unit corners pushed through the oracle
    let corners: Vec<Point<f64>> = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .iter()
        .map(|&(dp, dq)| {
            let pf = ac_power_flow(&case, &c, &[(0.0, 0.0), (-0.5 + dp, -0.2 + dq)], 1.001).unwrap();
            pf.slack
        })
        .collect();
    let oracle_area = polygon_area(&convex_hull(&corners));

    for mode in [TraceMode::PerimeterStep, TraceMode::AngularSweep] {
        let opts = TraceOptions { mode, n_points: 64, ..Default::default() };
        let b = trace_boundary(&case, &c, &opts).unwrap();
        assert!(!b.degenerate);
        let (p0, p1, q0, q1) = b.bounding_box();
        assert!(((p1 - p0) - 2.0).abs() <= 0.04, "{mode:?} width {}", p1 - p0);
        assert!(((q1 - q0) - 2.0).abs() <= 0.04, "{mode:?} height {}", q1 - q0);
        let (bp, bq) = b.base_point;
        assert!(((p0 + p1) / 2.0 - bp).abs() <= 0.02 && ((q0 + q1) / 2.0 - bq).abs() <= 0.02);
        assert!((b.area() - 4.0).abs() <= 0.08, "{mode:?} area {}", b.area());
        assert!((b.area() - oracle_area).abs() <= 0.02 * oracle_area);
        assert!(b.vertices.iter().all(|v| v.verified));
    }
}

#[test]
fn no_flexibility_is_degenerate() {
    let case = stiff_two_bus().scale_flex_capacity(0.0);
    let c = Configuration::normal(&case);
    for mode in [TraceMode::PerimeterStep, TraceMode::AngularSweep] {
        let opts = TraceOptions { mode, n_points: 16, ..Default::default() };
        let b = trace_boundary(&case, &c, &opts).unwrap();
        assert!(b.degenerate, "{mode:?}");
        assert_eq!(b.area(), 0.0);
        for v in &b.vertices {
            assert!((v.p - b.base_point.0).abs() < 1e-5 && (v.q - b.base_point.1).abs() < 1e-5);
        }
    }
    // a degenerate member empties the secure area without erroring
    let full = trace_boundary(&stiff_two_bus(), &c, &TraceOptions::default()).unwrap();
    let none = trace_boundary(&case, &c, &TraceOptions::default()).unwrap();
    assert!(intersect_areas(&[full, none]).unwrap().is_empty());
}

#[test]
fn bad_options_rejected() {
    let case = stiff_two_bus();
    let c = Configuration::normal(&case);
    let few = TraceOptions { mode: TraceMode::AngularSweep, n_points: 4, ..Default::default() };
    assert!(matches!(trace_boundary(&case, &c, &few), Err(FlexError::TraceFailure { .. })));
    let flat = TraceOptions { step_mva: 0.0, ..Default::default() };
    assert!(matches!(trace_boundary(&case, &c, &flat), Err(FlexError::TraceFailure { .. })));
    assert!(intersect_areas::<f64>(&[]).is_err());
}

fn sample_inside(ring: &[Point<f64>], n: usize, seed: u64) -> Vec<Point<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, x1) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pt = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        // keep clear of the boundary so the test is about sets, not rounding
        if contains_within(pt, ring, 0.0) && adnflex::geometry::distance_to_boundary(pt, ring) > 1e-6 {
            out.push(pt);
        }
    }
    out
}

#[test]
fn bundled_case_areas() {
    let case = cases::uk38::<f64>();
    let configs = enumerate_configurations(&case, 8).unwrap();
    assert_eq!(configs.len(), 4);
    let traces: Vec<FlexibilityBoundary> = configs
        .iter()
        .map(|c| trace_boundary(&case, c, &TraceOptions::default()).unwrap())
        .collect();
    let by_label = |l: &str| traces.iter().find(|b| b.config_label == l).unwrap();

    for b in &traces {
        assert!(!b.degenerate, "{}", b.config_label);
        assert!(b.vertices.iter().all(|v| v.verified), "{}", b.config_label);
        assert!(b.contains_within(b.base_point, 1e-9), "{} base outside", b.config_label);
        assert!(b.contains(centroid(&b.polygon())), "{} centroid outside", b.config_label);
        adnflex::geometry::check_simple(&b.polygon()).unwrap();
    }

    let radial = by_label("NOP-open");
    let meshed = by_label("NOP-closed");
    assert!(meshed.area() >= radial.area());
    for l in ["feeder-1-only", "feeder-2-only"] {
        assert!(by_label(l).area() < radial.area(), "{l}");
    }
    // closing the NOP relieves the high-consumption corner
    let (bp, bq) = radial.base_point;
    for v in radial.vertices.iter().filter(|v| v.p > bp && v.q > bq) {
        assert!(meshed.contains_within((v.p, v.q), STEP), "({}, {})", v.p, v.q);
    }

    let secure = intersect_areas(&traces).unwrap();
    assert!(!secure.is_empty());
    assert!(secure.area() < radial.area());
    let rings = secure.rings.clone();
    let per_ring = 1000 / rings.len() + 1;
    for (k, ring) in rings.iter().enumerate() {
        for pt in sample_inside(ring, per_ring, k as u64) {
            for b in &traces {
                assert!(b.contains(pt), "{pt:?} outside {}", b.config_label);
            }
        }
    }
}

#[test]
fn angular_vertices_lie_in_the_perimeter_hull() {
    let case = cases::uk38::<f64>();
    let configs = enumerate_configurations(&case, 8).unwrap();
    for label in ["NOP-open", "NOP-closed"] {
        let c = find_configuration(&configs, label).unwrap();
        let per = trace_boundary(&case, c, &TraceOptions::default()).unwrap();
        let ang = trace_boundary(
            &case,
            c,
            &TraceOptions { mode: TraceMode::AngularSweep, n_points: 72, ..Default::default() },
        )
        .unwrap();
        let hull = convex_hull(&per.polygon());
        for v in &ang.vertices {
            assert!(contains_within((v.p, v.q), &hull, STEP), "{label}: ({}, {})", v.p, v.q);
        }
        // and the perimeter trace is at least as large as the angular one
        assert!(per.area() >= 0.98 * ang.area(), "{label}");
    }
}

#[test]
fn more_capacity_never_shrinks_the_area() {
    let case = cases::uk38::<f64>();
    let configs = enumerate_configurations(&case, 8).unwrap();
    let c = find_configuration(&configs, "feeder-1-only").unwrap();
    let opts = TraceOptions { mode: TraceMode::AngularSweep, n_points: 48, ..Default::default() };
    let small = trace_boundary(&case, c, &opts).unwrap();
    let big = trace_boundary(&case.scale_flex_capacity(2.0), c, &opts).unwrap();
    assert!(big.area() >= small.area());
    // finitely many support points only approximate the hull from inside
    let hull = convex_hull(&big.polygon());
    for v in &small.vertices {
        assert!(contains_within((v.p, v.q), &hull, STEP), "({}, {})", v.p, v.q);
    }
}
