use std::path::PathBuf;
use std::process::{Command, Output};

const BASE: &str = r#"
seed = 9
n_trials = 2
n_g = 2
m = 3
k_i = 2
k_e = 1
k_p = 1
n_i = 1
n_e = 2
n_p = 1
p_t_dbm = 10.0
e_th_uw = [0.5]
i_th_uw = [0.1]
"#;

fn write_config(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("swipt-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &PathBuf) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt-sim")).args(args).arg("--config").arg(config).output().unwrap()
}

#[test]
fn solve_writes_csv_and_exits_zero() {
    let cfg = write_config("solve.toml", BASE);
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,sweep_name,sweep_value,method,user_index_or_blank,rate_bits,utility,harvested_uW,interference_uW,outer_iters,inner_iters,wall_ms,status"
    );
    // Two trials, one summary row and two per-user rows each.
    assert_eq!(lines.count(), 6);
}

#[test]
fn json_output_carries_config_and_rows() {
    let cfg = write_config("json.toml", BASE);
    let out = run(&["solve", "--format", "json", "--seed", "4"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["seed"], 4);
    assert_eq!(doc["config"]["mode"], "solve");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn bad_config_exits_one() {
    let cfg = write_config("bad.toml", &BASE.replace("e_th_uw = [0.5]", "e_th_uw = [0.5, 0.5]"));
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("e_th_uw"));
    assert!(out.stdout.is_empty());
}

#[test]
fn mode_conflict_exits_one() {
    let cfg = write_config("conflict.toml", &format!("mode = \"tradeoff\"\n{BASE}"));
    assert_eq!(run(&["solve"], &cfg).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    // The single-user design rejects two information users.
    let cfg = write_config("fail.toml", &format!("methods = [\"alg2-maxrate\"]\n{BASE}"));
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains("failed: ")));
}

#[test]
fn unreachable_thresholds_are_skipped_not_failed() {
    let cfg = write_config("skip.toml", &BASE.replace("e_th_uw = [0.5]", "e_th_uw = [1e6]"));
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().skip(1).filter(|l| l.ends_with("skipped-infeasible")).count(), 2);
}
