use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfpt-mdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const GRID: &str = "5 4\n.....\n.#.#.\n...#G\nS....\n";

#[test]
fn help_documents_defaults() {
    let out = run(&["solve", "--help"]);
    assert!(out.status.success());
    let help = text(&out.stdout);
    for needle in ["[default: 0.95]", "[default: 0.1]", "[default: 3]"] {
        assert!(help.contains(needle), "missing {needle} in\n{help}");
    }
    let help = text(&run(&["landscape", "--help"]).stdout);
    assert!(help.contains("[default: 100]"));
}

#[test]
fn gen_solve_landscape_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.txt");
    std::fs::write(&grid, GRID).unwrap();
    let mdp = dir.path().join("g.json");
    let result = dir.path().join("r.json");
    assert!(run(&["gen", "--grid", p(&grid), "--out", p(&mdp)]).status.success());

    let out = run(&["solve", "--mdp", p(&mdp), "--solver", "d-mfpt-vi", "--out", p(&result)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("iterations: "));
    assert!(stdout.contains("converged: true"));

    let prefix = dir.path().join("land");
    let out = run(&["landscape", "--mdp", p(&mdp), "--policy", p(&result), "--out", p(&prefix)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let pgm = std::fs::read_to_string(dir.path().join("land.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n5 4\n255\n"));
    // goal cell (row 2, col 4) is the brightest pixel
    let px: Vec<u32> = pgm.lines().skip(3).flat_map(|l| l.split_whitespace().map(|t| t.parse().unwrap())).collect();
    assert_eq!(px[2 * 5 + 4], 255);
    assert_eq!(px[5 + 1], 0, "obstacle drawn black");
    assert!(dir.path().join("land.csv").exists());

    let out = run(&["trace", "--result", p(&result)]);
    assert!(out.status.success());
    let trace = text(&out.stdout);
    assert!(trace.lines().next().unwrap().contains("delta_s"));
    assert!(trace.contains("# "));
}

#[test]
fn greedy_landscape_without_policy_file() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.txt");
    std::fs::write(&grid, GRID).unwrap();
    let mdp = dir.path().join("g.json");
    run(&["gen", "--grid", p(&grid), "--out", p(&mdp)]);
    let prefix = dir.path().join("gl");
    let out = run(&["landscape", "--mdp", p(&mdp), "--greedy", "--out", p(&prefix), "--cap", "20"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("unreachable: 0"));
}

#[test]
fn random_gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    for (path, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = run(&["gen", "--random", "60", "3", "4", "--seed", seed, "--out", p(path)]);
        assert!(out.status.success(), "{}", text(&out.stderr));
    }
    let read = |x: &Path| std::fs::read(x).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn unknown_solver_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("m.json");
    run(&["gen", "--random", "10", "2", "2", "--out", p(&mdp)]);
    let out = run(&["solve", "--mdp", p(&mdp), "--solver", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("d2-mfpt-vi") && err.contains("vi-ps"), "{err}");
}

#[test]
fn malformed_grid_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("bad.txt");
    std::fs::write(&grid, "3 2\n..G\n.x.\n").unwrap();
    let out = run(&["gen", "--grid", p(&grid), "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
}

#[test]
fn missing_file_is_domain_error() {
    let out = run(&["solve", "--mdp", "/nonexistent/m.json", "--solver", "vi"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{
  "instances": [{"kind": "random-grid", "obstacle_density": 0.1}],
  "solvers": ["vi", "mfpt-vi"],
  "state_sizes": [100],
  "repetitions": 1,
  "seed": 3
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["bench", "--plan", p(&plan), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
    assert!(text(&out.stdout).contains("mfpt-vi"));
}
