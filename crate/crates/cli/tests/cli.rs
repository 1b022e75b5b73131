use std::path::PathBuf;
use std::process::{Command, Output};

fn idcre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idcre")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn csv_rows(path: &PathBuf) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn preset_bounds_table_has_thresholds() {
    let path = scratch("preset_bounds.csv");
    let out = idcre(&["bounds", "--paper", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&path);
    let find = |bound: &str, l: &str| rows.iter().find(|r| &r[3] == bound && &r[5] == l).unwrap().clone();
    assert_eq!(&find("message_entropy", "")[9], "1747");
    assert_eq!(&find("repetition", "512")[9], "4096");
    assert_eq!(&find("repetition", "257")[9], "526336");
    let l2048 = find("repetition", "2048");
    assert_eq!(&l2048[8], "2340.5714");
    assert_eq!(&l2048[9], "2340");
    assert!(stdout(&out).contains("1747"));
}

#[test]
fn symbol_leak_is_spent_after_n_messages() {
    let path = scratch("preset_2048.csv");
    let out = idcre(&["bounds", "--paper", "--M", "2048", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&path);
    let leak = rows.iter().find(|r| &r[3] == "symbol_leak").unwrap();
    let bits: f64 = leak[7].parse().unwrap();
    assert!(bits.abs() < 1.0, "{bits}");
}

#[test]
fn no_messages_means_full_entropy() {
    let path = scratch("tiny_zero.csv");
    let out = idcre(&["bounds", "-q", "7", "-n", "4", "-k", "2", "--M", "0", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 4);
    for r in rows {
        let bits: f64 = r[7].parse().unwrap();
        assert!((bits - 840f64.log2()).abs() < 1e-6);
    }
}

#[test]
fn header_is_stable() {
    let path = scratch("header.csv");
    assert!(idcre(&["bounds", "-q", "5", "-n", "3", "-k", "2", "--out", path.to_str().unwrap()]).status.success());
    let header = csv::Reader::from_path(&path).unwrap().headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["q", "n", "k", "bound", "M", "l", "log2_family", "bound_bits", "crossing", "threshold", "exhausted"]
    );
}

#[test]
fn cre_over_budget_exits_3() {
    let out = idcre(&["cre", "--paper"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("131072"));
    let out = idcre(&["cre", "-q", "7", "-n", "4", "-k", "2", "--budget", "100"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("840"));
}

#[test]
fn bad_parameters_exit_2() {
    assert_eq!(idcre(&["bounds", "-q", "7", "-n", "9", "-k", "2"]).status.code(), Some(2));
    assert_eq!(idcre(&["bounds", "-q", "7", "-n", "4", "-k", "5"]).status.code(), Some(2));
    assert_eq!(idcre(&["bounds", "-q", "8", "-n", "4"]).status.code(), Some(2));
    assert_eq!(idcre(&["bounds", "-q", "9", "-n", "4", "-k", "2"]).status.code(), Some(2));
    assert_eq!(idcre(&["cre", "-q", "5", "-n", "3", "-k", "2", "--l", "3", "--M", "4"]).status.code(), Some(2));
    assert_eq!(idcre(&["bounds", "--paper", "-q", "7"]).status.code(), Some(2));
    assert_eq!(idcre(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unlinkable_cre_keeps_prior() {
    let path = scratch("cre_unlinkable.csv");
    let out = idcre(&["cre", "-q", "5", "-n", "3", "-k", "2", "--M", "1..20", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 20);
    for r in rows {
        assert_eq!(&r[3], &format!("{:.6}", 60f64.log2()));
        assert_eq!(&r[7], "true");
    }
}

#[test]
fn linkable_cre_is_monotone_and_above_bound() {
    let path = scratch("cre_linkable.csv");
    let out = idcre(&["cre", "-q", "5", "-n", "3", "-k", "2", "--l", "3", "--seed", "4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&path);
    let post: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(post.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    for r in &rows {
        let (p, b): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(p >= b - 1e-6);
    }
}

#[test]
fn same_seed_same_bytes() {
    let run = |name: &str, cmd: &[&str]| {
        let path = scratch(name);
        let mut args = cmd.to_vec();
        args.extend(["--out", path.to_str().unwrap()]);
        let out = idcre(&args);
        assert!(out.status.success());
        (out.stdout, std::fs::read(path).unwrap())
    };
    let cre = ["cre", "-q", "7", "-n", "4", "-k", "3", "--l", "4", "--M", "4,8,12", "--seed", "11"];
    assert_eq!(run("a.csv", &cre), run("b.csv", &cre));
    let sim = ["simulate", "-q", "7", "-n", "4", "-k", "2", "--trials", "500", "--eps", "0.2", "--seed", "5", "--linkable"];
    assert_eq!(run("a.jsonl", &sim), run("b.jsonl", &sim));
}

#[test]
fn honest_simulation_always_accepts() {
    let path = scratch("sim.jsonl");
    let out = idcre(&["simulate", "-q", "7", "-n", "4", "-k", "2", "--trials", "10000", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["acceptance_rate"], 1.0);
    assert_eq!(report["mutual_accept"], 10000);
    let lines = std::fs::read_to_string(path).unwrap();
    assert_eq!(lines.lines().count(), 20000);
}

#[test]
fn noisy_simulation_rejects_some() {
    let out = idcre(&["simulate", "-q", "7", "-n", "4", "-k", "2", "--trials", "2000", "--eps", "0.5"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["acceptance_rate"].as_f64().unwrap() < 1.0);
}

#[test]
fn persistent_device_reports_limit_events() {
    let out = idcre(&["simulate", "-q", "7", "-n", "4", "-k", "2", "--trials", "6", "--persistent"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mutual_accept"], 4);
    assert_eq!(report["limit_events"], 2);
}

#[test]
fn preset_lambda2_near_an_eighth() {
    let out = idcre(&["simulate", "--paper", "--trials", "20", "--lambda2", "adversarial"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["lambda2"]["bound"].as_f64().unwrap(), 255.0 / 2048.0);
}
