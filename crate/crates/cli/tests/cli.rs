use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hetero-hawkes"));
    c.env_remove("HAWKES_HETERO_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(spikes: &Path) -> Value {
    let text = fs::read_to_string(spikes).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first["meta"].clone()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, trials: &str, seed: &str) -> std::path::PathBuf {
    run(&[
        "simulate",
        "--preset",
        "linear_cox_basic",
        "--seed",
        seed,
        "--trials",
        trials,
        "--out",
        path(dir),
    ]);
    dir.join("spikes.jsonl")
}

#[test]
fn simulate_preset_writes_pair_dataset_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run(&[
            "simulate",
            "--preset",
            "linear_cox_basic",
            "--seed",
            "7",
            "--out",
            path(d),
        ]);
    }
    let meta = header(&a.join("spikes.jsonl"));
    assert_eq!(meta["trials"], 200);
    assert_eq!(meta["units"].as_array().unwrap().len(), 2);
    for f in ["spikes.jsonl", "network.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn trial_override_and_seed_from_environment() {
    let tmp = TempDir::new().unwrap();
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    simulate(&flag, "10", "5");
    let out = bin()
        .env("HAWKES_HETERO_SEED", "5")
        .args([
            "simulate",
            "--preset",
            "linear_cox_basic",
            "--trials",
            "10",
            "--out",
            path(&env),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(header(&flag.join("spikes.jsonl"))["trials"], 10);
    assert_eq!(
        fs::read(flag.join("spikes.jsonl")).unwrap(),
        fs::read(env.join("spikes.jsonl")).unwrap()
    );
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"scenario": "multivariate6", "seed": 4}"#).unwrap();
    let out = tmp.path().join("out");
    run(&["simulate", "--config", path(&cfg), "--trials", "3", "--out", path(&out)]);
    let meta = header(&out.join("spikes.jsonl"));
    assert_eq!(meta["trials"], 3);
    assert_eq!(meta["units"].as_array().unwrap().len(), 6);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 4);
}

#[test]
fn modified_and_standard_fits_on_basic_pair() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp.path().join("sim"), "200", "7");
    let m = tmp.path().join("m");
    let s = tmp.path().join("s");
    let stdout = run(&["fit", path(&data), "--source", "i", "--target", "j", "--out", path(&m)]).stdout;
    let text = String::from_utf8(stdout).unwrap();
    assert!(text.contains("selected sigma_w") && text.contains(" ms"), "{text}");
    run(&[
        "fit",
        path(&data),
        "--method",
        "standard",
        "--source",
        "i",
        "--target",
        "j",
        "--out",
        path(&s),
    ]);

    let alpha = |dir: &Path| {
        let f = json(&dir.join("fit_j.json"));
        let k = f["impact_offset"].as_u64().unwrap() as usize;
        (f["params"][k].as_f64().unwrap(), f["std_errors"][k].as_f64().unwrap())
    };
    let (am, sm) = alpha(&m);
    let (as_, ss) = alpha(&s);
    assert!((am - 2.0).abs() < 3.0 * sm, "modified {am} ± {sm}");
    // standard estimate sits near truth plus the closed-form bias for this pair (about 1.975)
    assert!((as_ - 3.975).abs() < 3.0 * ss, "standard {as_} ± {ss}");
    let curve = fs::read_to_string(m.join("curve_i_to_j.csv")).unwrap();
    assert!(curve.starts_with("lag,value,ci_lo,ci_hi"));
}

#[test]
fn spline_fit_has_eleven_coefficients() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp.path().join("sim"), "30", "2");
    let out = tmp.path().join("fit");
    run(&[
        "fit",
        path(&data),
        "--method",
        "spline",
        "--source",
        "i",
        "--target",
        "j",
        "--lag-window",
        "50",
        "--knots",
        "9",
        "--sigma-w",
        "125",
        "--out",
        path(&out),
    ]);
    let f = json(&out.join("fit_j.json"));
    assert_eq!(f["impact_coeffs"].as_array().unwrap().len(), 11);
    let rows = fs::read_to_string(out.join("curve_i_to_j.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 52);
}

#[test]
fn unknown_unit_is_reported_with_available_ids() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp.path().join("sim"), "2", "1");
    let out = bin()
        .args([
            "fit",
            path(&data),
            "--source",
            "i",
            "--target",
            "zz",
            "--out",
            path(&tmp.path().join("f")),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("zz") && err.contains("i, j"), "{err}");
}

#[test]
fn theory_writes_one_csv_and_stable_manifest() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let stdout = run(&["theory", "--out", path(&a)]).stdout;
    run(&["theory", "--out", path(&b)]);
    let text = String::from_utf8(stdout).unwrap();
    assert!(text.contains("1.975"), "{text}");
    let m = json(&a.join("manifest.json"));
    let arts = m["artifacts"].as_array().unwrap();
    assert_eq!(arts.len(), 1);
    assert_eq!(arts[0]["path"], "theory.csv");
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
    let csv = fs::read_to_string(a.join("theory.csv")).unwrap();
    assert!(csv.starts_with("sigma_w_ms,bias,se,rmse"));
    assert_eq!(csv.lines().count(), 26);

    let c = tmp.path().join("c");
    run(&["theory", "--sigma-h", "40", "--out", path(&c)]);
    assert_ne!(json(&c.join("manifest.json"))["config_hash"], m["config_hash"]);
}

#[test]
fn ccg_gof_and_network_produce_artifacts() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(&tmp.path().join("sim"), "20", "3");
    let ccg = tmp.path().join("ccg");
    run(&[
        "ccg",
        path(&data),
        "--source",
        "i",
        "--target",
        "j",
        "--n-mc",
        "50",
        "--seed",
        "1",
        "--out",
        path(&ccg),
    ]);
    let table = fs::read_to_string(ccg.join("ccg_i_to_j.csv")).unwrap();
    assert!(table.starts_with("lag,ccg,null_mean,lo,hi,p"));

    let gof = tmp.path().join("gof");
    let text = String::from_utf8(
        run(&[
            "gof",
            path(&data),
            "--source",
            "i",
            "--target",
            "j",
            "--sigma-w",
            "125",
            "--out",
            path(&gof),
        ])
        .stdout,
    )
    .unwrap();
    assert!(text.contains("time-rescaling KS"));
    assert!(gof.join("qq_j.csv").exists() && gof.join("gof.csv").exists());

    let net = tmp.path().join("net");
    run(&[
        "network",
        path(&data),
        "--sigma-w",
        "125",
        "--correction",
        "none",
        "--level",
        "0.05",
        "--out",
        path(&net),
    ]);
    let graph = json(&net.join("network.json"));
    assert!(graph["nodes"].is_array() && graph["edges"].is_array());
    assert!(net.join("network.csv").exists());
}

#[test]
fn experiment_writes_tables_and_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("exp");
    run(&[
        "experiment",
        "pvalue_uniformity",
        "--reps",
        "3",
        "--n-mc",
        "20",
        "--jobs",
        "2",
        "--out",
        path(&out),
    ]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("ks_p_modified"));
    assert!(out.join("pvalue_uniformity.csv").exists());

    let bad = bin()
        .args(["experiment", "nope", "--out", path(&out)])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
