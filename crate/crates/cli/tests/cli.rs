use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jetflow::expr::{evaluate, parse, Binding};
use jetflow::JetSymbol;

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn jetflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jetflow")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_problem(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Csv {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    Csv { header, rows }
}

fn simulate(file: &Path, route: &str, extra: &[&str]) -> Csv {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let mut args = vec!["simulate", path_str(file), "--route", route, "--out", path_str(&out)];
    args.extend_from_slice(extra);
    let o = jetflow(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    read_csv(&out)
}

#[test]
fn derive_free_second_order() {
    let o = jetflow(&["derive", path_str(&problem("free_second_order.toml"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(value(&text, "E1"), "q1_4");
    assert_eq!(value(&text, "p1_0"), "-q1_3");
    assert_eq!(value(&text, "p1_1"), "q1_2");
    assert_eq!(value(&text, "embedding.z1"), "q1_2");
    assert_eq!(value(&text, "embedding.q2_0"), "q1_1");
}

#[test]
fn derive_pais_uhlenbeck() {
    let o = jetflow(&["derive", path_str(&problem("pais_uhlenbeck.toml"))]);
    let printed = parse(value(&stdout(&o), "E1")).unwrap();
    let expected = parse("q1_4 + (w1^2 + w2^2)*q1_2 + w1^2*w2^2*q1_0").unwrap();
    for (k, (a, b, c, w1, w2)) in [(0.3, -1.2, 2.0, 1.0, 2.0), (1.5, 0.1, -0.7, 0.4, 3.0)].into_iter().enumerate() {
        let binding = Binding::new()
            .with(JetSymbol::coordinate(1, 0), a)
            .with(JetSymbol::coordinate(1, 2), b)
            .with(JetSymbol::coordinate(1, 4), c)
            .with(JetSymbol::parameter("w1"), w1)
            .with(JetSymbol::parameter("w2"), w2);
        let (u, v) = (evaluate(&printed, &binding).unwrap(), evaluate(&expected, &binding).unwrap());
        assert!((u - v).abs() < 1e-12, "point {k}: {u} vs {v}");
    }
}

#[test]
fn derive_constrained() {
    let o = jetflow(&["derive", path_str(&problem("constrained.toml"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(value(&text, "stationarity.1"), "p1_0 + 2 * p2_0 * z1 - z1");
    assert_eq!(value(&text, "regularity"), "2 * p2_0 - 1");
}

#[test]
fn simulate_free_second_order_both_routes() {
    let file = problem("free_second_order.toml");
    let ostro = simulate(&file, "ostro", &[]);
    assert_eq!(ostro.header, ["t", "q1_0", "q1_1", "p1_0", "p1_1"]);
    let last = ostro.rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 1.0).abs() < 1e-8, "{}", last[1]);
    let el = simulate(&file, "el", &[]);
    assert_eq!(el.header, ostro.header);
    assert!((el.rows.last().unwrap()[1] - last[1]).abs() < 1e-8);
}

#[test]
fn simulate_pais_uhlenbeck_period() {
    let traj = simulate(&problem("pais_uhlenbeck.toml"), "ostro", &[]);
    let last = traj.rows.last().unwrap();
    assert!((last[0] - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    assert!((last[1] - 1.0).abs() < 1e-6, "{}", last[1]);
}

#[test]
fn simulate_full_pontryagin_appends_controls() {
    let traj = simulate(&problem("constrained.toml"), "pontryagin-full", &[]);
    assert_eq!(traj.header, ["t", "q1_0", "q2_0", "p1_0", "p2_0", "z1"]);
    let reduced = simulate(&problem("constrained.toml"), "pontryagin-reduced", &[]);
    assert_eq!(reduced.header, traj.header[..5]);
    for (a, b) in traj.rows.iter().zip(&reduced.rows) {
        for (u, v) in a[..5].iter().zip(b) {
            assert!((u - v).abs() < 1e-8);
        }
    }
}

#[test]
fn csv_values_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let file = problem("pais_uhlenbeck.toml");
    let o = jetflow(&["simulate", path_str(&file), "--route", "ostro", "--t1", "0.5", "--out", path_str(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    for field in text.lines().nth(100).unwrap().split(',') {
        let v: f64 = field.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), field);
    }
}

#[test]
fn simulate_to_stdout_and_overrides() {
    let o = jetflow(&["simulate", path_str(&problem("free_second_order.toml")), "--route", "ostro", "--dt", "0.1", "--t1", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 22);
    let last: Vec<f64> = lines[21].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    assert!((last[1] - 8.0).abs() < 1e-10);
}

#[test]
fn method_override() {
    let file = problem("coupled.toml");
    let adaptive = simulate(&file, "ostro", &[]);
    let fixed = simulate(&file, "ostro", &["--method", "rk4", "--dt", "1e-3"]);
    assert!(adaptive.rows.len() < fixed.rows.len());
    let (a, b) = (adaptive.rows.last().unwrap(), fixed.rows.last().unwrap());
    for (u, v) in a.iter().zip(b) {
        assert!((u - v).abs() < 1e-8, "{a:?} vs {b:?}");
    }
    // No run.tol in this file, so rk45 cannot be selected.
    let o = jetflow(&["simulate", path_str(&problem("pais_uhlenbeck.toml")), "--route", "ostro", "--method", "rk45"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.tol"));
}

#[test]
fn verify_passes_on_examples() {
    for name in ["free_second_order.toml", "pais_uhlenbeck.toml", "free_third_order.toml", "coupled.toml", "constrained.toml"] {
        let o = jetflow(&["verify", path_str(&problem(name))]);
        let text = stdout(&o);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{text}");
        assert_eq!(value(&text, "status"), "pass");
        assert!(!text.contains("= fail"), "{text}");
    }
}

#[test]
fn verify_constrained_reports_route_gap() {
    let text = stdout(&jetflow(&["verify", path_str(&problem("constrained.toml"))]));
    let line = value(&text, "check.pontryagin_full_vs_reduced");
    assert!(line.starts_with("pass (measured "), "{line}");
    let measured: f64 = line["pass (measured ".len()..].split(',').next().unwrap().parse().unwrap();
    assert!(measured < 1e-8);
}

#[test]
fn verify_rejects_degenerate_lagrangian() {
    let o = jetflow(&["verify", path_str(&problem("degenerate.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(value(&text, "error.1").contains("singular top Hessian"), "{text}");
    assert_eq!(value(&text, "status"), "fail");
    let o = jetflow(&["derive", path_str(&problem("degenerate.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("singular top Hessian"));
}

#[test]
fn verify_report_is_stable_and_json_parses() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let file = problem("coupled.toml");
    let a = jetflow(&["verify", path_str(&file), "--json", path_str(&json)]);
    let b = jetflow(&["verify", path_str(&file)]);
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert_eq!(report["kind"], "higher-order");
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

const FREE: &str = r#"
schema = 1
kind = "higher-order"
n = 1
N = 2
lagrangian = "q1_2^2 / 2"
[initial]
jets = [[0, 0, 0, 6]]
[run]
t1 = 1.0
dt = 1e-3
"#;

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("order.toml", FREE.replace("q1_2^2 / 2", "q1_3^2 / 2"), "order exceeds N"),
        ("syntax.toml", FREE.replace("q1_2^2 / 2", "q1_2^^2"), "syntax error at byte"),
        ("shape.toml", FREE.replace("[[0, 0, 0, 6]]", "[[0, 0, 6]]"), "initial.jets[0]"),
        ("type.toml", FREE.replace("n = 1", "n = \"one\""), "`n`"),
        ("toml.toml", FREE.replace("[run]", "[run"), "invalid TOML"),
    ];
    for (name, text, needle) in cases {
        let file = write_problem(&dir, name, &text);
        for cmd in ["derive", "verify"] {
            let o = jetflow(&[cmd, path_str(&file)]);
            assert_eq!(o.status.code(), Some(2), "{name} {cmd}");
            assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
        }
    }
    let o = jetflow(&["derive", path_str(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn incompatible_routes_are_input_errors() {
    let o = jetflow(&["simulate", path_str(&problem("constrained.toml")), "--route", "ostro"]);
    assert_eq!(o.status.code(), Some(2));
    let o = jetflow(&["simulate", path_str(&problem("coupled.toml")), "--route", "el"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial.jets"));
    let o = jetflow(&["simulate", path_str(&problem("coupled.toml")), "--route", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_keeps_partial_trajectory() {
    // log(1 - t) leaves its domain at t = 1.
    let dir = tempfile::tempdir().unwrap();
    let file = write_problem(
        &dir,
        "blowup.toml",
        &FREE.replace("q1_2^2 / 2", "q1_2^2 / 2 + log(1 - t) * q1_0").replace("t1 = 1.0", "t1 = 2.0"),
    );
    let out = dir.path().join("partial.csv");
    let o = jetflow(&["simulate", path_str(&file), "--route", "ostro", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("domain"), "{}", stderr(&o));
    let partial = read_csv(&out);
    let t_last = partial.rows.last().unwrap()[0];
    assert!(t_last > 0.9 && t_last < 1.0, "{t_last}");
}
