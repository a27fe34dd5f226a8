//! End-to-end runs of the `polylab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn polylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polylab")).args(args).output().expect("polylab runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Runs `cmd` on `config` into `out` and returns the exit code and the
/// written files.
fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> (i32, Vec<PathBuf>) {
    let cfg = write_config(out.parent().unwrap_or(out), &format!("{cmd}.cfg"), config);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = polylab(&args);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let files = stdout.lines().filter(|l| !l.starts_with("verdict:")).map(PathBuf::from).collect();
    let code = o.status.code().unwrap();
    assert!(code != 1, "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    (code, files)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bad_configs_list_every_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "beta = hot\nwidth = 3\nn = 4\nn = 5\nensemble = mixed\nno pair here\n");
    let o = polylab(&["partition", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    for needle in ["`beta`", "unknown key `width`", "duplicate key `n`", "`ensemble`", "line 6"] {
        assert!(err.contains(needle), "missing `{needle}` in:\n{err}");
    }
    assert!(err.contains("5 problems"), "{err}");
    // range checks after parsing are collected too
    let cfg = write_config(dir.path(), "range.cfg", "lambda = 0\nreplicas = 1\nns = 20,10\nfan_height = 9\n");
    let o = polylab(&["lyapunov", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("4 problems"), "{err}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2, "nothing but the configs is written");
}

#[test]
fn unknown_subcommand_is_an_error() {
    assert_eq!(polylab(&["transmogrify"]).status.code(), Some(1));
    assert_eq!(polylab(&["--help"]).status.code(), Some(0));
}

#[test]
fn endpoint_law_sums_to_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for ensemble in ["quenched", "annealed"] {
        let (code, files) = run("partition", &format!("beta = 1\nlambda = 0.3\nh = 0.5,0\nn = 8\nensemble = {ensemble}\nseed = 4\n"), &out, &[]);
        assert_eq!(code, 0);
        let v = json(&files[0]);
        let s = v["result"]["probability_sum"].as_f64().unwrap();
        assert!((s - 1.0).abs() <= 1e-12, "{ensemble}: {s}");
        let mut reader = csv::Reader::from_path(&files[1]).unwrap();
        let total: f64 = reader.records().map(|r| r.unwrap()[3].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn geometric_renewal_has_the_known_mean() {
    let dir = TempDir::new().unwrap();
    let (code, files) = run("renewal", "law = geometric\nrho = 0.4\ndim = 2\n", &dir.path().join("out"), &[]);
    assert_eq!(code, 0);
    let v = json(&files[0]);
    assert!((v["result"]["kappa"].as_f64().unwrap() - 5.0 / 3.0).abs() <= 1e-12);
    assert!((v["result"]["limit"].as_f64().unwrap() - 0.6).abs() <= 1e-12);
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_pool_sizes() {
    let dir = TempDir::new().unwrap();
    let config = "beta = 1\nlambda = 0.5\nns = 4,8\nreplicas = 6\nseed = 17\n";
    let (_, a) = run("lyapunov", config, &dir.path().join("a"), &["--workers", "1"]);
    let (_, b) = run("lyapunov", config, &dir.path().join("b"), &["--workers", "4"]);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let text = std::fs::read_to_string(&a[0]).unwrap();
    assert!(!text.contains("\r\n"));
    let (_, c) = run("lyapunov", config, &dir.path().join("c"), &["--seed", "18"]);
    assert_ne!(a[0].file_name(), c[0].file_name());
}

#[test]
fn report_pools_seeds_and_keeps_beta_apart() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("runs");
    let base = "test = lln\nh = 2.5,0\nns = 8\nreplicas = 20\n";
    let mut singles = Vec::new();
    for seed in ["1", "2", "3"] {
        let (code, files) = run("disorder", &format!("{base}beta = 0.5\n"), &out, &["--seed", seed]);
        assert_eq!(code, 0);
        singles.push(json(&files[0])["estimates"][0]["stderr"].as_f64().unwrap());
    }
    run("disorder", &format!("{base}beta = 1\n"), &out, &["--seed", "1"]);
    let rep_dir = dir.path().join("report");
    let o = polylab(&["report", out.to_str().unwrap(), "--out", rep_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let report_json = stdout.lines().find(|l| l.ends_with(".json")).unwrap();
    let r = json(Path::new(report_json));
    let groups = r["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    let pooled = groups.iter().find(|g| g["seeds"].as_array().unwrap().len() == 3).unwrap();
    let se = pooled["estimates"][0]["stderr"].as_f64().unwrap();
    assert!(singles.iter().all(|&s| se < s), "pooled {se} vs {singles:?}");
    let m = &r["mismatches"][0];
    assert_eq!(m["keys"], serde_json::json!(["beta"]));
    assert!(m["note"].as_str().unwrap().contains("refused to pool"));
    assert!(stdout.contains("beta differs"));
    assert!(rep_dir.read_dir().unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "txt")));
}

#[test]
fn report_rejects_tampered_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("runs");
    let (_, files) = run("env", "radius = 3\n", &out, &[]);
    let text = std::fs::read_to_string(&files[0]).unwrap().replace("\"radius\": \"3\"", "\"radius\": \"4\"");
    std::fs::write(&files[0], text).unwrap();
    let o = polylab(&["report", files[0].to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}

#[test]
fn inconclusive_runs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let (code, files) = run("disorder", "test = ratio\nns = 5,10\nreplicas = 4\n", &dir.path().join("out"), &[]);
    assert_eq!(code, 2);
    let v = json(&files[0]);
    assert_eq!(v["verdict"], "inconclusive");
    assert_eq!(v["inconclusive"], true);
}
