use std::path::Path;
use std::process::{Command, Output};

use blocklsq::generators::{fig3, Fig3System};
use blocklsq::io::save_problem;

fn blocklsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blocklsq")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_five_agent_file() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("fig3_A1.json");
    let (p, g) = fig3(Fig3System::Unique);
    save_problem(&problem, &p, &g).unwrap();
    let summary = dir.path().join("summary.json");
    let metrics = dir.path().join("metrics.csv");
    let o = blocklsq(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--rho",
        "1",
        "--summary",
        summary.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = read_json(&summary);
    assert_eq!(s["termination"], "converged");
    assert!(s["err_x"].as_f64().unwrap() <= 1e-6);
    assert!(s["rate"]["rate"].as_f64().unwrap() < 1.0);
    let csv = std::fs::read_to_string(&metrics).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,primal_inf,consensus_inf,delta_w,cost,cost_gap,err_x,messages,elapsed_ms"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() as u64, s["rounds"].as_u64().unwrap());
    assert!(rows.iter().all(|r| r.split(',').nth(7) == Some("12")));
}

#[test]
fn grid_generator_shape() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let o = blocklsq(&[
        "solve",
        "--generator",
        "grid",
        "--rows",
        "4",
        "--cols",
        "6",
        "--seed",
        "7",
        "--max-iters",
        "50",
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let s = read_json(&summary);
    let z = s["z"].as_array().unwrap();
    assert_eq!(z.len(), 24);
    assert!(z.iter().all(|zi| zi.as_array().unwrap().len() == 20));
}

#[test]
fn disconnected_subgraph_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    let o = blocklsq(&["generate", "--generator", "appendix-a", "--out", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut v = read_json(&file);
    let edges = v["graph"]["edges"].as_array_mut().unwrap();
    edges.retain(|e| e != &serde_json::json!([2, 4]));
    std::fs::write(&file, v.to_string()).unwrap();
    let o = blocklsq(&["solve", "--problem", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("G_2"), "{}", stderr(&o));
    let o = blocklsq(&["validate", "--problem", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("G_4: nodes [2, 3, 4] connected false"));
}

#[test]
fn malformed_and_missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, r#"{"row_dims": [1], "col_dims": [1], "agents": 1, "blocks": [], "h": [], "grap": {}}"#).unwrap();
    let o = blocklsq(&["solve", "--problem", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("grap"), "{}", stderr(&o));
    let missing = dir.path().join("missing.json");
    let o = blocklsq(&["validate", "--problem", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn generate_is_deterministic() {
    let a = blocklsq(&["generate", "--generator", "grid", "--rows", "2", "--cols", "3", "--n-local", "4", "--m-coupled", "2", "--seed", "4"]);
    let b = blocklsq(&["generate", "--generator", "grid", "--rows", "2", "--cols", "3", "--n-local", "4", "--m-coupled", "2", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["agents"], 6);
}

#[test]
fn oracle_and_spectrum() {
    let o = blocklsq(&["oracle", "--generator", "fig3", "--which", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["unique"], true);
    assert_eq!(v["z_star"].as_array().unwrap().len(), 4);
    let o = blocklsq(&["spectrum", "--generator", "fig3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("certified true"));
    let o = blocklsq(&["spectrum", "--generator", "grid", "--rows", "4", "--cols", "6"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("exceeds cap"));
}

#[test]
fn thread_env_is_respected_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_blocklsq"))
            .env("BLOCKLSQ_THREADS", threads)
            .args(["solve", "--generator", "appendix-a", "--metrics", path.to_str().unwrap()])
            .output()
            .unwrap();
        (o.status.code(), path)
    };
    let (c1, p1) = run("1", "one.csv");
    let (c4, p4) = run("4", "four.csv");
    assert_eq!((c1, c4), (Some(0), Some(0)));
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&p1), strip(&p4));
    assert_eq!(run("zero", "x.csv").0, Some(3));
}

#[test]
fn bad_flags_exit_3() {
    assert_eq!(blocklsq(&["solve", "--generator", "fig3", "--rho", "-1"]).status.code(), Some(3));
    assert_eq!(blocklsq(&["solve"]).status.code(), Some(3));
    assert_eq!(blocklsq(&["--help"]).status.code(), Some(0));
}
