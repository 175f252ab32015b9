use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mwrmab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwrmab"))
        .args(args)
        .env("MWRMAB_FIXTURES", dir.join("fixtures"))
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn specialist_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/v1/specialist_noise_free_n10.json")
}

fn index_values(o: &Output) -> Vec<Vec<Vec<f64>>> {
    assert!(o.status.success(), "{}", stderr(o));
    let v: serde_json::Value = serde_json::from_str(&stdout(o)).unwrap();
    serde_json::from_value(v["values"].clone()).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["generate", "--domain", "specialist", "--arms", "4", "--seed", "3"];
    let a = mwrmab(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&mwrmab(dir.path(), &args)));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["arms"].as_array().unwrap().len(), 4);
    assert_eq!(v["num_workers"], 2);
}

#[test]
fn specialist_rejects_three_workers() {
    let dir = TempDir::new().unwrap();
    let o = mwrmab(dir.path(), &["generate", "--domain", "specialist", "--workers", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("M must be 2"), "{}", stderr(&o));
}

#[test]
fn generate_writes_to_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("inst.json");
    let o = mwrmab(
        dir.path(),
        &["generate", "--domain", "ordered_workers", "--arms", "3", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["num_workers"], 3);
    assert_eq!(v["budget"], 18.0);
}

#[test]
fn fixture_updates_manifest() {
    let dir = TempDir::new().unwrap();
    for (name, seed) in [("one", "1"), ("two", "2")] {
        let o = mwrmab(
            dir.path(),
            &["generate", "--domain", "constant_costs", "--arms", "2", "--seed", seed, "--fixture", name],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).is_empty());
    }
    let fixtures = dir.path().join("fixtures");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixtures.join("manifest.json")).unwrap()).unwrap();
    for name in ["one", "two"] {
        let entry = &manifest["fixtures"][name];
        assert_eq!(entry["file"], format!("{name}.json"));
        assert_eq!(entry["hash"].as_str().unwrap().len(), 64);
        assert!(fixtures.join(format!("{name}.json")).exists());
    }
    assert_ne!(manifest["fixtures"]["one"]["hash"], manifest["fixtures"]["two"]["hash"]);
}

#[test]
fn specialist_indices_show_the_gap() {
    let dir = TempDir::new().unwrap();
    let path = specialist_fixture();
    let inst = path.to_str().unwrap();
    let dec = index_values(&mwrmab(dir.path(), &["index", "--instance", inst]));
    let adj = index_values(&mwrmab(dir.path(), &["index", "--instance", inst, "--kind", "adjusted"]));
    let tol = 1e-5;
    for i in 0..dec.len() {
        assert!(dec[i][0][0].abs() <= 2.0 * tol, "{}", dec[i][0][0]);
        assert!(adj[i][0][0] > tol, "{}", adj[i][0][0]);
    }
}

#[test]
fn single_worker_indices_agree() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("one.json");
    let out = out.to_str().unwrap();
    let g = mwrmab(
        dir.path(),
        &["generate", "--domain", "constant_costs", "--arms", "4", "--workers", "1", "--out", out],
    );
    assert!(g.status.success(), "{}", stderr(&g));
    let dec = index_values(&mwrmab(dir.path(), &["index", "--instance", out]));
    let adj = index_values(&mwrmab(dir.path(), &["index", "--instance", out, "--kind", "adjusted"]));
    for (d, a) in dec.iter().flatten().flatten().zip(adj.iter().flatten().flatten()) {
        assert!((d - a).abs() <= 2e-5, "{d} vs {a}");
    }
}

#[test]
fn index_on_missing_file_fails_validation() {
    let dir = TempDir::new().unwrap();
    let o = mwrmab(dir.path(), &["index", "--instance", "nope.json"]);
    assert_eq!(o.status.code(), Some(2));
}

const SMALL_RUN: [&str; 13] = [
    "run", "--domain", "constant_costs", "--arms", "4", "--algorithms", "CWI_BA,RANDOM",
    "--horizon", "10", "--epochs", "2", "--no-timing", "--out",
];

#[test]
fn run_appends_rows_under_one_header() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("res.csv");
    let mut args = SMALL_RUN.to_vec();
    args.push(out.to_str().unwrap());
    for _ in 0..2 {
        let o = mwrmab(dir.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("domain,algorithm,"));
    assert!(lines[1..].iter().all(|l| !l.starts_with("domain,")));
    assert_eq!(lines[1], lines[3]);
    assert!(lines[1].starts_with("constant_costs,CWI_BA,4,2,"));
    assert!(lines[2].starts_with("constant_costs,RANDOM,"));
    assert_eq!(lines[1].split(',').nth(10), Some("NA"));
    let manifest = dir.path().join("res.csv.manifest.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(v["plans"].as_array().unwrap().len(), 1);
}

#[test]
fn oversized_optimum_reports_size_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("big.csv");
    let o = mwrmab(
        dir.path(),
        &[
            "run", "--domain", "constant_costs", "--arms", "10", "--algorithms", "OPT,RANDOM",
            "--horizon", "5", "--epochs", "1", "--out", out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("constant_costs,OPT,") && lines[1].contains("ERR:size"));
    assert!(!lines[2].contains("ERR"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(mwrmab(dir.path(), &["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(mwrmab(dir.path(), &["run"]).status.code(), Some(1));
    assert_eq!(
        mwrmab(dir.path(), &["run", "--domain", "constant_costs", "--algorithms", "NOPE"]).status.code(),
        Some(1)
    );
    assert_eq!(mwrmab(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_values_yield_to_flags() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("plan.json");
    fs::write(
        &config,
        r#"[{"domain": {"kind": "ordered_workers", "num_arms": 3, "num_workers": 3, "seed": 5},
             "algorithms": ["CWI_BA", "CWI_GA"], "horizon": 8, "epochs": 2}]"#,
    )
    .unwrap();
    let detail = dir.path().join("detail.json");
    let o = mwrmab(
        dir.path(),
        &[
            "run", "--config", config.to_str().unwrap(), "--algorithms", "CWI_GA", "--arms", "2",
            "--no-timing", "--markdown", "--detail", detail.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("ordered_workers,")).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("ordered_workers,CWI_GA,2,3,18,10,"), "{}", rows[0]);
    assert!(text.contains('|'));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(detail).unwrap()).unwrap();
    let records = v[0]["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["steps"].as_array().unwrap().len(), 8);
}

#[test]
fn malformed_config_fails_validation() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, "{\"domain\": 3}").unwrap();
    let o = mwrmab(dir.path(), &["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
