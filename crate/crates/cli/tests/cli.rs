use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../sim/fixtures")
}

fn scenario(name: &str) -> PathBuf {
    fixtures().join("scenarios").join(name)
}

fn rbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(case: &str, mode: &str, dir: &Path) -> serde_json::Value {
    let path = dir.join(format!("{case}-{mode}.json"));
    let o = rbt(&[
        "run",
        "--scenario",
        scenario(case).to_str().unwrap(),
        "--mode",
        mode,
        "--report",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_reports_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let r = report("case2.json", "rbt", dir.path());
    assert_eq!(r["node_count"], serde_json::json!({"min": 19, "max": 19}));
    assert_eq!(r["goal_reached"], true);
    let r = report("case2.json", "bt", dir.path());
    assert_eq!(r["node_count"]["max"], 151);
    let r = report("case1.json", "rbt", dir.path());
    assert_eq!(r["node_count"], serde_json::json!({"min": 19, "max": 22}));
    assert_eq!(r["sort_order"], serde_json::json!(["b_box", "g_box", "r_box"]));
    let r = report("case1.json", "bt", dir.path());
    assert_eq!(r["node_count"]["max"], 27);
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("total_tick_time");
        v
    };
    let a = strip(report("case2_perturbed.json", "rbt", dir.path()));
    let b = strip(report("case2_perturbed.json", "rbt", dir.path()));
    assert_eq!(a, b);
}

#[test]
fn trace_is_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = rbt(&[
        "run",
        "--scenario",
        scenario("case2.json").to_str().unwrap(),
        "--mode",
        "rbt",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(trace).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["tick"], i as u64 + 1);
        for k in ["root_status", "current", "priorities", "flags", "tick_ns"] {
            assert!(l.get(k).is_some(), "{k}");
        }
    }
    assert_eq!(lines.last().unwrap()["root_status"], "Success");
}

#[test]
fn exhausted_budget_exits_two() {
    let o = rbt(&[
        "run",
        "--scenario",
        scenario("case2.json").to_str().unwrap(),
        "--mode",
        "rbt",
        "--max-ticks",
        "2",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = rbt(&["run", "--scenario", missing.to_str().unwrap(), "--mode", "rbt"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.json"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"case": 3}"#).unwrap();
    let o = rbt(&["run", "--scenario", bad.to_str().unwrap(), "--mode", "bt"]);
    assert_eq!(code(&o), 1);

    let ltm = dir.path().join("ltm");
    fs::create_dir(&ltm).unwrap();
    fs::write(
        ltm.join("rbt_root.json"),
        r#"[{"name": "rbt_root", "type": "fallback", "children": ["ghost"], "params": [""]}]"#,
    )
    .unwrap();
    let o = rbt(&[
        "run",
        "--scenario",
        scenario("case2.json").to_str().unwrap(),
        "--mode",
        "rbt",
        "--ltm",
        ltm.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("rbt_root.json") && err.contains("ghost"), "{err}");
}

#[test]
fn validate_matrix() {
    let o = rbt(&["validate", "--ltm", fixtures().join("ltm").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let o = rbt(&["validate", "--ltm", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("no tasks"));

    fs::write(
        dir.path().join("dangling.json"),
        r#"[{"name": "d_root", "type": "sequence", "children": ["sequence_9"], "params": [""]}]"#,
    )
    .unwrap();
    let o = rbt(&["validate", "--ltm", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("sequence_9"));

    let o = rbt(&["validate", "--ltm", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn inspect_matrix() {
    let o = rbt(&["inspect", "--task", "sort box", "--expand"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[7], "7 nodes");

    let o = rbt(&[
        "inspect",
        "--ltm",
        fixtures().join("ltm").to_str().unwrap(),
        "--task",
        "rbt_root",
        "--expand",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with("Fallback: rbt_root\n  Condition: goal reached\n"));
    assert!(out.ends_with("13 nodes\n"));

    let o = rbt(&["inspect", "--task", "missing"]);
    assert_eq!(code(&o), 1);
}
