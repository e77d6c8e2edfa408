use std::process::{Command, Output};

fn monopoly(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_monopoly"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("MONOPOLY_WORKERS", w),
        None => cmd.env_remove("MONOPOLY_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn validate_reports_json() {
    let out = monopoly(&["validate", "--feedback", "power", "--p", "2", "--grid-max", "100000"], None);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);

    let out = monopoly(&["validate", "--feedback", "power", "--p", "0.9"], None);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
}

#[test]
fn constant_matches_library() {
    let out = monopoly(&["constant", "--p", "2", "--x0", "2", "--y0", "1", "--rel-tol", "1e-7"], None);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let fb = monopoly::feedback::FeedbackFunction::power(2.0).unwrap();
    let lib = monopoly::analytics::limit_constant_c(&fb, 2, 1, 1e-7).unwrap();
    assert_eq!(v["c"].as_f64().unwrap(), lib.c);
    assert_eq!(v["x"], 2);
}

#[test]
fn tail_loser_csv_shape() {
    let out = monopoly(&["tail-loser", "--p", "2", "--n", "10,20", "--samples", "2000", "--seed", "5"], None);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let body = text(&out.stdout);
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), monopoly::montecarlo::CSV_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("tail-loser,power,2.0,1,1,,,,10,2000,"));
}

#[test]
fn worker_count_does_not_change_output() {
    let args = ["window", "--p", "2", "--q", "sqrt:1", "--n", "16,64", "--samples", "5000", "--seed", "9"];
    let one = monopoly(&args, Some("1"));
    let four = monopoly(&args, Some("4"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert!(text(&one.stderr).contains("fitted decay exponent"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\n[feedback]\nkind = \"power\"\np = 2.0\n[experiment]\nn_list = [8]\nsamples = 500\n[output]\nformat = \"json\"\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = monopoly(&["tail-loser", "--config", c], None);
    assert_eq!(from_file.status.code(), Some(0), "{}", text(&from_file.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(rows[0]["samples"], 500);
    assert_eq!(rows[0]["seed"], 3);

    let out_path = dir.path().join("out.csv");
    let overridden = monopoly(
        &["tail-loser", "--config", c, "--samples", "700", "--format", "csv", "--output", out_path.to_str().unwrap()],
        None,
    );
    assert_eq!(overridden.status.code(), Some(0));
    assert!(overridden.stdout.is_empty());
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert!(written.lines().nth(1).unwrap().contains(",8,700,"));
}

#[test]
fn plan_runs_every_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(
        &plan,
        r#"
seed = 11
samples = 1000

[[experiment]]
kind = "tail-loser"
feedback = { kind = "power", p = 2.0 }
n = [10, 20]

[[experiment]]
kind = "imbalance"
feedback = { kind = "power", p = 2.0 }
n = [10]
alpha = "3/10"
beta = "2/5"

[[experiment]]
kind = "loser-fraction"
feedback = { kind = "power-times-log", p = 2.0 }
n = [40]
alpha = "1/4"
"#,
    )
    .unwrap();
    let out = monopoly(&["run", "--plan", plan.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let body = text(&out.stdout);
    let kinds: Vec<&str> = body.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, ["tail-loser", "tail-loser", "imbalance", "loser-fraction"]);

    std::fs::write(&plan, "seed = 1\n[[experiment]]\nkind = \"imbalance\"\nfeedback = { kind = \"power\", p = 2.0 }\nn = [10]\n")
        .unwrap();
    let bad = monopoly(&["run", "--plan", plan.to_str().unwrap()], None);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).contains("experiment[0].alpha"));
}

#[test]
fn simulate_emits_trajectory() {
    let out = monopoly(&["simulate", "--p", "1.5", "--counts", "1,2,3", "--steps", "25", "--seed", "4"], None);
    assert_eq!(out.status.code(), Some(0));
    let body = text(&out.stdout);
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "step,bin_1,bin_2,bin_3");
    assert_eq!(lines[1], "0,1,2,3");
    assert_eq!(lines.len(), 27);
    let last: u64 = lines[26].split(',').skip(1).map(|x| x.parse::<u64>().unwrap()).sum();
    assert_eq!(last, 31);
    assert_eq!(out.stdout, monopoly(&["simulate", "--p", "1.5", "--counts", "1,2,3", "--steps", "25", "--seed", "4"], None).stdout);
}

#[test]
fn exit_codes() {
    // missing seed, unknown flag, bad env, bad domain
    assert_eq!(monopoly(&["tail-loser", "--p", "2", "--n", "5", "--samples", "10"], None).status.code(), Some(2));
    assert_eq!(monopoly(&["validate", "--p", "2", "--nope"], None).status.code(), Some(2));
    assert_eq!(
        monopoly(&["tail-loser", "--p", "2", "--n", "5", "--samples", "10", "--seed", "1"], Some("zero")).status.code(),
        Some(2)
    );
    let out = monopoly(&["imbalance", "--p", "2", "--n", "100", "--alpha", "0.4", "--beta", "0.4", "--samples", "10", "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).starts_with("error:"));
    let out = monopoly(&["constant", "--p", "2", "--rel-tol", "1e-30"], None);
    assert_ne!(out.status.code(), Some(0));
    // output into a missing directory is an I/O failure
    let out = monopoly(&["simulate", "--p", "2", "--steps", "3", "--seed", "1", "--output", "/nonexistent/dir/x.csv"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(monopoly(&["--help"], None).status.code(), Some(0));
}
