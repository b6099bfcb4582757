use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use adnflex::boundary::{base_point, intersect_areas, trace_boundary, SecureArea, TraceMode, TraceOptions};
use adnflex::config::{enumerate_configurations, Configuration, DEFAULT_SWITCH_CAP};
use adnflex::dispatch::{compare_surfaces, cost_map, GridSpec};
use adnflex::network::{parse_case, validate_case};
use adnflex::nlp::SolverSettings;
use adnflex::oracle::verify_point;
use adnflex::{CostSurface, FlexError, FlexibilityBoundary, NetworkCase, OperatingPoint};
use log::info;
use rayon::prelude::*;

use crate::records::{comparison_csv, mode_name, BoundaryRecord, SecureRecord, SurfaceRecord};
use crate::run::{read_manifest, sha256_hex, slug, CaseEntry, CmdResult, Failure, RunDir, CASE_COPY};
use crate::svg::{self, Plot};

pub const VERIFY_TOL: f64 = 1e-5;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub multistart: Option<usize>,
    pub deterministic: bool,
    pub out: PathBuf,
}

pub struct TraceArgs {
    pub mode: TraceMode,
    pub step: f64,
    pub points: usize,
}

impl TraceArgs {
    fn check(&self) -> CmdResult<()> {
        match self.mode {
            TraceMode::PerimeterStep if !(self.step > 0.0 && self.step.is_finite()) => {
                Err(Failure::Usage("step must be positive".into()))
            }
            TraceMode::AngularSweep if self.points < 8 => {
                Err(Failure::Usage("points must be at least 8".into()))
            }
            _ => Ok(()),
        }
    }
}

struct Loaded {
    case: NetworkCase,
    text: String,
    entry: CaseEntry,
    settings: SolverSettings,
}

fn load_case(path: &Path, common: &Common) -> CmdResult<Loaded> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Failure::Usage(format!("file not found: {}", path.display())))
        }
        Err(e) => return Err(Failure::Usage(format!("cannot read {}: {e}", path.display()))),
    };
    let case: NetworkCase = parse_case(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let diags = validate_case(&case);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(Failure::Usage(format!("invalid case {}: {}", path.display(), list.join("; "))));
    }
    let mut settings = SolverSettings::default();
    let cs = &case.settings;
    if let Some(t) = cs.tol {
        settings.tol_kkt = t;
    }
    if let Some(m) = cs.max_iter {
        settings.max_iter = m;
    }
    if let Some(m) = cs.multistart {
        settings.multistart = m;
    }
    if let Some(t) = common.tol {
        settings.tol_kkt = t;
    }
    if let Some(m) = common.max_iter {
        settings.max_iter = m;
    }
    if let Some(m) = common.multistart {
        settings.multistart = m;
    }
    settings.validate().map_err(Failure::Usage)?;
    let entry = CaseEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
        copy: CASE_COPY.into(),
    };
    Ok(Loaded { case, text, entry, settings })
}

fn select(case: &NetworkCase, labels: &[String]) -> CmdResult<Vec<Configuration>> {
    let all = enumerate_configurations(case, DEFAULT_SWITCH_CAP).map_err(|e| Failure::Usage(e.to_string()))?;
    if labels.is_empty() {
        return Ok(all);
    }
    labels
        .iter()
        .map(|l| {
            all.iter().find(|c| &c.label == l).cloned().ok_or_else(|| {
                let known: Vec<&str> = all.iter().map(|c| c.label.as_str()).collect();
                Failure::Usage(format!("unknown configuration {l:?} (known: {})", known.join(", ")))
            })
        })
        .collect()
}

fn compute(e: FlexError) -> Failure {
    Failure::Compute(e.to_string())
}

fn start_run(command: &str, common: &Common, loaded: &Loaded, configs: &[Configuration]) -> CmdResult<RunDir> {
    let mut run = RunDir::create(&common.out, command, loaded.entry.clone(), common.deterministic)?;
    run.write(CASE_COPY, "case", loaded.text.as_bytes())?;
    run.set_configurations(configs.iter().map(|c| c.label.clone()).collect());
    run.param("tol_kkt", loaded.settings.tol_kkt);
    run.param("max_iter", loaded.settings.max_iter);
    run.param("multistart", loaded.settings.multistart);
    run.param("verify_tol", VERIFY_TOL);
    Ok(run)
}

fn timestamp(run: &RunDir) -> Option<u64> {
    (!run.deterministic()).then(crate::run::now_unix)
}

fn trace_options(args: &TraceArgs, settings: &SolverSettings) -> TraceOptions {
    TraceOptions {
        mode: args.mode,
        n_points: args.points,
        step_mva: args.step,
        settings: settings.clone(),
        verify_tol: VERIFY_TOL,
    }
}

fn trace_all(
    case: &NetworkCase,
    configs: &[Configuration],
    opts: &TraceOptions,
) -> CmdResult<Vec<FlexibilityBoundary>> {
    configs
        .iter()
        .map(|c| {
            info!("tracing {}", c.label);
            let b = trace_boundary(case, c, opts).map_err(compute)?;
            let bad = b.vertices.iter().filter(|v| !v.verified).count();
            if bad > 0 {
                eprintln!("warning: {}: {bad} vertices failed oracle re-verification", c.label);
            }
            if !b.failures.is_empty() {
                eprintln!("warning: {}: {} extreme solves failed", c.label, b.failures.len());
            }
            Ok(b)
        })
        .collect()
}

fn bbox(polys: &[Vec<(f64, f64)>]) -> (f64, f64, f64, f64) {
    let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in polys.iter().flatten() {
        bb = (bb.0.min(p.0), bb.1.max(p.0), bb.2.min(p.1), bb.3.max(p.1));
    }
    if !bb.0.is_finite() {
        return (-1.0, 1.0, -1.0, 1.0);
    }
    bb
}

fn overlay(title: &str, bounds: &[FlexibilityBoundary], secure: Option<&SecureArea<f64>>, ts: Option<u64>) -> String {
    let polys: Vec<Vec<(f64, f64)>> = bounds.iter().map(|b| b.polygon()).collect();
    let mut plot = Plot::new(title, bbox(&polys), ts);
    for (k, (b, poly)) in bounds.iter().zip(&polys).enumerate() {
        plot.polygon(poly, svg::SERIES[k % svg::SERIES.len()], None, &b.config_label);
    }
    if let Some(s) = secure {
        for (k, ring) in s.rings.iter().enumerate() {
            let label = if k == 0 { "secure" } else { "" };
            plot.polygon(ring, svg::SECURE, Some(svg::SECURE), label);
        }
    }
    for (k, b) in bounds.iter().enumerate() {
        plot.marker(b.base_point, svg::SERIES[k % svg::SERIES.len()], "");
    }
    plot.render()
}

fn write_boundaries(run: &mut RunDir, bounds: &[FlexibilityBoundary], points: usize) -> CmdResult<()> {
    for b in bounds {
        let rec = BoundaryRecord::new(b, points);
        let s = slug(&b.config_label);
        run.write_json(&format!("boundary_{s}.json"), "boundary", &rec)?;
        run.write(&format!("boundary_{s}.csv"), "csv", rec.csv().as_bytes())?;
        println!(
            "{}: {} vertices, area {:.4} MVA², base ({:.4} MW, {:.4} MVAr){}",
            b.config_label,
            b.vertices.len(),
            b.area(),
            b.base_point.0,
            b.base_point.1,
            if b.degenerate { ", degenerate" } else { "" }
        );
    }
    Ok(())
}

pub fn trace(common: &Common, case_path: &Path, labels: &[String], args: &TraceArgs) -> CmdResult<PathBuf> {
    args.check()?;
    let loaded = load_case(case_path, common)?;
    let configs = select(&loaded.case, labels)?;
    let opts = trace_options(args, &loaded.settings);
    let bounds = trace_all(&loaded.case, &configs, &opts)?;

    let mut run = start_run("trace", common, &loaded, &configs)?;
    run.param("mode", mode_name(args.mode));
    run.param("step_mva", args.step);
    run.param("points", args.points);
    write_boundaries(&mut run, &bounds, args.points)?;
    let ts = timestamp(&run);
    run.write("overlay.svg", "svg", overlay("Flexibility areas", &bounds, None, ts).as_bytes())?;
    run.finish()
}

pub fn secure(common: &Common, case_path: &Path, args: &TraceArgs) -> CmdResult<PathBuf> {
    args.check()?;
    let loaded = load_case(case_path, common)?;
    let case = &loaded.case;
    let configs = select(case, &[])?;
    let opts = trace_options(args, &loaded.settings);

    // A configuration with no operating point at all empties the secure
    // area; that is a finding, not a failure.
    let mut feasible = Vec::new();
    let mut infeasible = Vec::new();
    for c in &configs {
        match base_point(case, c, &loaded.settings) {
            Ok(_) => feasible.push(c.clone()),
            Err(e) if c.is_contingency(case) => {
                eprintln!("warning: {} has no feasible operating point ({e})", c.label);
                infeasible.push(c.label.clone());
            }
            Err(e) => return Err(compute(e)),
        }
    }
    let bounds = trace_all(case, &feasible, &opts)?;
    let area = if infeasible.is_empty() {
        intersect_areas(&bounds).map_err(compute)?
    } else {
        SecureArea { rings: vec![], contributing: configs.iter().map(|c| c.label.clone()).collect() }
    };
    if area.is_empty() {
        eprintln!("warning: secure area is empty");
    }

    let mut run = start_run("secure", common, &loaded, &configs)?;
    run.param("mode", mode_name(args.mode));
    run.param("step_mva", args.step);
    run.param("points", args.points);
    write_boundaries(&mut run, &bounds, args.points)?;
    let rec = SecureRecord::new(&area, infeasible);
    run.write_json("secure.json", "secure", &rec)?;
    run.write("secure.csv", "csv", rec.csv().as_bytes())?;
    let ts = timestamp(&run);
    run.write("secure.svg", "svg", overlay("Secure area", &bounds, Some(&area), ts).as_bytes())?;
    println!("secure area: {:.4} MVA² in {} ring(s)", area.area(), area.rings.len());
    run.finish()
}

fn cost_svg(s: &CostSurface, b: &FlexibilityBoundary, max_cost: f64, ts: Option<u64>) -> String {
    let g = s.grid;
    let bb = (g.p(0), g.p(g.n_p - 1), g.q(0), g.q(g.n_q - 1));
    let mut plot = Plot::new(&format!("Total flexibility cost, {}", s.config_label), bb, ts);
    for n in s.nodes.iter().filter(|n| n.feasible) {
        plot.cell((n.target.p_ref, n.target.q_ref), g.step, &svg::sequential(n.total_cost / max_cost.max(1e-12)));
    }
    plot.polygon(&b.polygon(), "#333333", None, &s.config_label);
    plot.colour_bar(0.0, max_cost, "$/h", svg::sequential);
    plot.render()
}

fn unit_svg(case: &NetworkCase, s: &CostSurface, u: usize, ts: Option<u64>) -> String {
    let g = s.grid;
    let unit = &case.flex_units[u];
    let cap = unit.p_up_max.max(unit.p_dn_max).max(1e-12);
    let bb = (g.p(0), g.p(g.n_p - 1), g.q(0), g.q(g.n_q - 1));
    let mut plot = Plot::new(&format!("Unit {} active regulation, {}", unit.label, s.config_label), bb, ts);
    for n in s.nodes.iter().filter(|n| n.feasible) {
        let r = n.regulations[u];
        plot.cell((n.target.p_ref, n.target.q_ref), g.step, &svg::diverging((r[0] - r[1]) / cap));
    }
    plot.colour_bar(-cap, cap, "MW (up +)", |t| svg::diverging(2.0 * t - 1.0));
    plot.render()
}

pub struct CostArgs {
    pub step: f64,
    pub compare: Option<(String, String)>,
}

pub fn costmap(common: &Common, case_path: &Path, labels: &[String], args: &CostArgs) -> CmdResult<PathBuf> {
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(Failure::Usage("step must be positive".into()));
    }
    let loaded = load_case(case_path, common)?;
    let case = &loaded.case;
    let wanted: Vec<String> = match &args.compare {
        Some((a, b)) if a == b => return Err(Failure::Usage("--compare needs two different configurations".into())),
        Some((a, b)) => vec![a.clone(), b.clone()],
        None => labels.to_vec(),
    };
    let configs = select(case, &wanted)?;

    // the boundaries size the grid, anchored at the first base point
    let trace_opts = TraceOptions { settings: loaded.settings.clone(), ..TraceOptions::default() };
    let bounds = trace_all(case, &configs, &trace_opts)?;
    let refs: Vec<&FlexibilityBoundary> = bounds.iter().collect();
    let grid = GridSpec::covering(&refs, bounds[0].base_point, args.step).map_err(|e| Failure::Usage(e.to_string()))?;
    info!("grid {} x {} at {} MVA", grid.n_p, grid.n_q, grid.step);

    let mut surfaces = Vec::new();
    for (c, b) in configs.iter().zip(&bounds) {
        info!("cost map {}", c.label);
        let s = cost_map(case, c, grid, b.base_point, &loaded.settings).map_err(compute)?;
        if !s.failures.is_empty() {
            eprintln!("warning: {}: {} grid nodes failed to solve", c.label, s.failures.len());
        }
        println!("{}: {} of {} nodes feasible", c.label, s.feasible_count(), grid.len());
        surfaces.push(s);
    }

    let mut run = start_run("costmap", common, &loaded, &configs)?;
    run.param("step_mva", args.step);
    run.param("grid", grid);
    run.param("trace_step_mva", trace_opts.step_mva);
    if let Some((a, b)) = &args.compare {
        run.param("compare", [a, b]);
    }
    write_boundaries(&mut run, &bounds, trace_opts.n_points)?;
    let ts = timestamp(&run);
    let max_cost = surfaces
        .iter()
        .flat_map(|s| s.nodes.iter().filter(|n| n.feasible).map(|n| n.total_cost))
        .fold(0.0, f64::max);
    for (s, b) in surfaces.iter().zip(&bounds) {
        let tag = slug(&s.config_label);
        let rec = SurfaceRecord::new(s, &case.flex_units);
        run.write_json(&format!("surface_{tag}.json"), "surface", &rec)?;
        run.write(&format!("surface_{tag}.csv"), "csv", rec.csv().as_bytes())?;
        run.write(&format!("cost_{tag}.svg"), "svg", cost_svg(s, b, max_cost, ts).as_bytes())?;
        for (u, unit) in case.flex_units.iter().enumerate() {
            let name = format!("unit_{tag}_{}.svg", slug(&unit.label));
            run.write(&name, "svg", unit_svg(case, s, u, ts).as_bytes())?;
        }
    }

    if args.compare.is_some() {
        let cmp = compare_surfaces(&surfaces[0], &surfaces[1]).map_err(compute)?;
        let tag = format!("{}__{}", slug(&cmp.label_a), slug(&cmp.label_b));
        run.write_json(&format!("comparison_{tag}.json"), "comparison", &cmp)?;
        run.write(&format!("comparison_{tag}.csv"), "csv", comparison_csv(&cmp).as_bytes())?;
        let span = cmp.max_savings.abs().max(cmp.min_savings.abs()).max(1e-12);
        let bb = (grid.p(0), grid.p(grid.n_p - 1), grid.q(0), grid.q(grid.n_q - 1));
        let mut plot = Plot::new(&format!("Savings of {} over {}", cmp.label_b, cmp.label_a), bb, ts);
        for n in &cmp.nodes {
            if let Some(s) = n.savings {
                plot.cell((n.p_mw, n.q_mvar), grid.step, &svg::diverging(s / span));
            } else if n.feasible_b {
                plot.cell((n.p_mw, n.q_mvar), grid.step, "#2ca02c");
            }
        }
        plot.polygon(&bounds[0].polygon(), svg::SERIES[0], None, &cmp.label_a);
        plot.polygon(&bounds[1].polygon(), svg::SERIES[1], None, &cmp.label_b);
        plot.colour_bar(-span, span, "$/h", |t| svg::diverging(2.0 * t - 1.0));
        run.write(&format!("savings_{tag}.svg"), "svg", plot.render().as_bytes())?;
        println!(
            "{} vs {}: {} common nodes, savings {:.6} to {:.6} $/h (mean {:.6}); cheaper at {}, dearer at {}; gained {}, lost {}",
            cmp.label_a,
            cmp.label_b,
            cmp.common_feasible,
            cmp.min_savings,
            cmp.max_savings,
            cmp.mean_savings,
            cmp.cheaper_in_b,
            cmp.dearer_in_b,
            cmp.gained,
            cmp.lost
        );
    }
    run.finish()
}

/// Re-hashes every listed artifact and re-verifies every stored operating
/// point against the copied case. Returns the number of points checked.
pub fn validate(dir: &Path) -> CmdResult<usize> {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("no manifest: {} is not a directory", dir.display())));
    }
    let manifest = read_manifest(dir)?;
    let mut problems: Vec<String> = Vec::new();
    let mut intact: Vec<(String, String)> = Vec::new();
    for o in &manifest.outputs {
        match fs::read(dir.join(&o.file)) {
            Err(_) => problems.push(format!("{}: missing", o.file)),
            Ok(bytes) if sha256_hex(&bytes) != o.sha256 => problems.push(format!("{}: hash mismatch", o.file)),
            Ok(_) => intact.push((o.file.clone(), o.kind.clone())),
        }
    }
    if !intact.iter().any(|(f, _)| f == &manifest.case.copy) {
        for p in &problems {
            eprintln!("{p}");
        }
        return Err(Failure::Verification(format!("{}: case copy unusable", manifest.case.copy)));
    }
    let text = fs::read_to_string(dir.join(&manifest.case.copy))?;
    let case: NetworkCase = parse_case(&text).map_err(|e| Failure::Verification(format!("{}: {e}", manifest.case.copy)))?;
    let configs = enumerate_configurations(&case, DEFAULT_SWITCH_CAP).map_err(|e| Failure::Verification(e.to_string()))?;
    let tol = manifest
        .parameters
        .get("verify_tol")
        .and_then(|v| v.as_f64())
        .unwrap_or(VERIFY_TOL);

    let mut checked = 0usize;
    for (file, kind) in &intact {
        let text = fs::read_to_string(dir.join(file))?;
        let stored: Result<(String, Vec<(String, OperatingPoint)>), String> = match kind.as_str() {
            "boundary" => serde_json::from_str::<BoundaryRecord>(&text).map_err(|e| e.to_string()).map(|r| {
                let pts = r.vertices.into_iter().map(|v| (format!("vertex {}", v.index), v.point)).collect();
                (r.config_label, pts)
            }),
            "surface" => serde_json::from_str::<SurfaceRecord>(&text).map_err(|e| e.to_string()).map(|r| {
                let pts = r
                    .nodes
                    .into_iter()
                    .filter_map(|n| n.point.map(|p| (format!("node ({}, {})", n.i, n.j), p)))
                    .collect();
                (r.config_label, pts)
            }),
            _ => continue,
        };
        let (label, points) = match stored {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("{file}: unreadable ({e})"));
                continue;
            }
        };
        let Some(config) = configs.iter().find(|c| c.label == label) else {
            problems.push(format!("{file}: unknown configuration {label:?}"));
            continue;
        };
        let failed: Vec<String> = points
            .par_iter()
            .filter_map(|(what, p)| match verify_point(&case, config, p, tol) {
                Ok(r) if r.passed => None,
                Ok(r) => {
                    let fams: Vec<String> = r
                        .checks
                        .iter()
                        .filter(|c| !c.passed)
                        .map(|c| format!("{} ({})", c.family, c.detail))
                        .collect();
                    Some(format!("{file}: {what} failed {}", fams.join(", ")))
                }
                Err(e) => Some(format!("{file}: {what}: {e}")),
            })
            .collect();
        checked += points.len();
        problems.extend(failed);
    }
    println!("{checked} stored points checked in {} files; {} problems", intact.len(), problems.len());
    if problems.is_empty() {
        Ok(checked)
    } else {
        for p in &problems {
            eprintln!("{p}");
        }
        Err(Failure::Verification(format!("{} problems found", problems.len())))
    }
}
