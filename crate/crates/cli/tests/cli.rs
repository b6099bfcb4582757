use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adnflex::cases;
use adnflex::network::{to_case_text, FlexUnit};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/uk38.case")
}

fn adnflex(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adnflex"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    let text = String::from_utf8_lossy(&o.stdout);
    PathBuf::from(text.lines().last().expect("run directory printed").trim())
}

fn files(dir: &Path, prefix: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn single_config_trace_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let case = bundled();
    let o = adnflex(tmp.path(), &["trace", case.to_str().unwrap(), "--config", "NOP-open"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = run_dir(&o);
    assert_eq!(files(&dir, "boundary_").len(), 2, "one CSV and one JSON");
    let csv = fs::read_to_string(dir.join("boundary_NOP-open.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "config_label,theta_or_step_index,P_MW,Q_MVAr,status,binding_tags");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "NOP-open");
    // 17 significant digits: d.dddddddddddddddde±x
    let mantissa = row[2].trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{}", row[2]);
    assert_eq!(row[4], "Optimal");

    let v = Command::new(env!("CARGO_BIN_EXE_adnflex")).arg("validate").arg(&dir).output().unwrap();
    assert_eq!(code(&v), 0, "{}", stderr(&v));

    // run directories are never reused
    let again = adnflex(tmp.path(), &["trace", case.to_str().unwrap(), "--config", "NOP-open"]);
    assert_eq!(code(&again), 0);
    assert_ne!(run_dir(&again), dir);
    assert!(run_dir(&again).ends_with("trace-0002"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let case = bundled();
    let case = case.to_str().unwrap();

    let o = adnflex(tmp.path(), &["trace", "missing.case"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("file not found"));

    let o = adnflex(tmp.path(), &["costmap", case, "--step", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("step must be positive"));

    let o = adnflex(tmp.path(), &["trace", case, "--step", "-1"]);
    assert_eq!(code(&o), 2);

    let o = adnflex(tmp.path(), &["trace", case, "--mode", "angular", "--points", "4"]);
    assert_eq!(code(&o), 2);

    let o = adnflex(tmp.path(), &["trace", case, "--config", "no-such-config"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown configuration"));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = adnflex(tmp.path(), &["validate", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no manifest"));

    let bad = tmp.path().join("bad.case");
    let text = fs::read_to_string(bundled()).unwrap().replace("\n33 0.94 1.06", "\n33 1.07 1.06");
    fs::write(&bad, text).unwrap();
    let o = adnflex(tmp.path(), &["trace", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("voltage bounds inverted"), "{}", stderr(&o));
}

#[test]
fn tampering_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adnflex(tmp.path(), &["trace", bundled().to_str().unwrap(), "--config", "feeder-1-only"]);
    assert_eq!(code(&o), 0);
    let dir = run_dir(&o);
    let f = dir.join("boundary_feeder-1-only.json");
    let text = fs::read_to_string(&f).unwrap();
    fs::write(&f, text.replacen("\"verified\": true", "\"verified\": false", 1)).unwrap();
    let v = Command::new(env!("CARGO_BIN_EXE_adnflex")).arg("validate").arg(&dir).output().unwrap();
    assert_eq!(code(&v), 1);
    assert!(stderr(&v).contains("boundary_feeder-1-only.json: hash mismatch"));

    fs::remove_file(dir.join("overlay.svg")).unwrap();
    let v = Command::new(env!("CARGO_BIN_EXE_adnflex")).arg("validate").arg(&dir).output().unwrap();
    assert_eq!(code(&v), 1);
    assert!(stderr(&v).contains("overlay.svg: missing"));
}

#[test]
fn timestamps_only_without_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let case = bundled();
    let args = ["trace", case.to_str().unwrap(), "--config", "NOP-closed", "--mode", "angular", "--points", "16"];
    let plain = run_dir(&adnflex(tmp.path(), &args));
    let mut det_args = args.to_vec();
    det_args.push("--deterministic");
    let det = run_dir(&adnflex(tmp.path(), &det_args));
    assert!(fs::read_to_string(plain.join("overlay.svg")).unwrap().contains("generated-unix"));
    assert!(fs::read_to_string(plain.join("manifest.json")).unwrap().contains("created_unix"));
    assert!(!fs::read_to_string(det.join("overlay.svg")).unwrap().contains("generated-unix"));
    assert!(!fs::read_to_string(det.join("manifest.json")).unwrap().contains("created_unix"));
    // angular traces report the direction angle
    let csv = fs::read_to_string(det.join("boundary_NOP-closed.csv")).unwrap();
    let theta: f64 = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((theta - std::f64::consts::TAU / 16.0).abs() < 1e-12);
}

#[test]
fn one_configuration_secures_its_own_area() {
    let tmp = tempfile::tempdir().unwrap();
    let mut case = cases::two_bus::<f64>(0.01, 0.03, 0.5, 0.2);
    case.flex_units.push(FlexUnit {
        label: "U".into(),
        bus: 2,
        p_up_max: 0.5,
        p_dn_max: 0.5,
        q_up_max: 0.5,
        q_dn_max: 0.5,
        cost_p: 300.0,
        cost_q: 150.0,
    });
    let path = tmp.path().join("two.case");
    fs::write(&path, to_case_text(&case)).unwrap();
    let o = adnflex(tmp.path(), &["secure", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = run_dir(&o);
    let secure: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("secure.json")).unwrap()).unwrap();
    let boundary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("boundary_normal.json")).unwrap()).unwrap();
    let (a, b) = (secure["area_mva2"].as_f64().unwrap(), boundary["area_mva2"].as_f64().unwrap());
    assert!(b > 0.5 && (a - b).abs() <= 1e-9 * b, "{a} vs {b}");
}

#[test]
fn infeasible_contingency_empties_the_secure_area() {
    let tmp = tempfile::tempdir().unwrap();
    // the normally open tie can't carry a whole feeder at 0.5 MVA
    let text = fs::read_to_string(bundled()).unwrap().replace("20 35 0.004 0.008 12.0", "20 35 0.004 0.008 0.5");
    let path = tmp.path().join("tight.case");
    fs::write(&path, text).unwrap();
    let o = adnflex(tmp.path(), &["secure", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("warning: feeder-1-only has no feasible operating point"), "{err}");
    assert!(err.contains("secure area is empty"));
    let secure: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir(&o).join("secure.json")).unwrap()).unwrap();
    assert_eq!(secure["rings"].as_array().unwrap().len(), 0);
    assert_eq!(secure["infeasible"].as_array().unwrap().len(), 2);
}
