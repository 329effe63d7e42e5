use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hippo::sim::{run_replicate, score, Method, SimulationSpec, StudyConfig};
use hippo::stage2::Stage2Problem;
use hippo::stage3::Stage3Problem;
use hippo::{Criterion, TuningGrid};
use serde_json::Value;

fn hippo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hippo"))
        .args(args)
        .env_remove("HIPPO_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hippo(args);
    assert!(
        out.status.success(),
        "hippo {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn simulate(dir: &Path, n: usize, p: usize, seed: u64) -> PathBuf {
    ok(&[
        "simulate", "--study", "sim2", "--n", &n.to_string(), "--p", &p.to_string(), "--seed", &seed.to_string(),
        "--out-dir", s(dir),
    ]);
    dir.join("data.csv")
}

#[test]
fn fit_round_trip_reproduces_objectives() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 120, 20, 11);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--header", "--intercept", "--fast", "--iterations", "2", "--out-dir", s(&out)]);
    let model = read_json(&out.join("model.json"));
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["iterations"], 2);

    // independent re-scoring through the library
    let d = {
        let text = std::fs::read_to_string(&data).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
            .collect();
        let (n, p) = (rows.len(), rows[0].len() - 1);
        let y = nalgebra::DVector::from_iterator(n, rows.iter().map(|r| r[0]));
        let z = nalgebra::DMatrix::from_fn(n, p, |i, j| rows[i][j + 1]);
        hippo::Dataset::from_covariates(z, y, true).unwrap()
    };
    let penalty: hippo::Penalty = serde_json::from_value(model["config"]["penalty"].clone()).unwrap();
    let (beta, theta) = (floats(&model["beta"]), floats(&model["theta"]));
    let (ls, lt) = (model["lambda_s"].as_f64().unwrap(), model["lambda_t"].as_f64().unwrap());
    let eta = d.residuals(&floats(&model["stage2_mean"])).unwrap();
    let o2 = Stage2Problem::from_residuals(&d, &eta, lt, penalty).unwrap().objective_theta(&theta).unwrap();
    let o3 = Stage3Problem::from_theta(&d, &theta, ls, penalty).unwrap().objective_beta(&beta).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    assert!(rel(o2, model["stage2"]["objective"].as_f64().unwrap()) < 1e-10);
    assert!(rel(o3, model["stage3"]["objective"].as_f64().unwrap()) < 1e-10);
    let nll = hippo::neg_loglik(&hippo::ModelParams::new(beta.clone(), theta.clone()).unwrap(), &d).unwrap();
    assert!(rel(nll, model["neg_loglik"].as_f64().unwrap()) < 1e-10);

    let report = ok(&["kkt-check", "--model", s(&out.join("model.json")), "--data", s(&data), "--header"]);
    assert!(report.contains("PASS"), "{report}");

    // intervals cover the selected mean support, intercept first
    let cis = model["confidence_intervals"].as_array().unwrap();
    let supp: Vec<u64> = model["beta_support"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(cis.len(), supp.len() + 1);
    assert_eq!(cis[0]["j"], 0);
    for ci in cis {
        assert!(ci["lo"].as_f64().unwrap() <= ci["estimate"].as_f64().unwrap());
        assert!(ci["estimate"].as_f64().unwrap() <= ci["hi"].as_f64().unwrap());
    }
}

#[test]
fn kkt_check_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 80, 16, 3);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--header", "--intercept", "--lambda-s", "1.0", "--lambda-t", "0.5", "--out-dir", s(&out)]);
    let mut model = read_json(&out.join("model.json"));
    let b = model["beta"][1].as_f64().unwrap();
    model["beta"][1] = Value::from(b + 0.5);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&model).unwrap()).unwrap();
    let res = hippo(&["kkt-check", "--model", s(&bad), "--data", s(&data), "--header"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn explicit_lambdas_give_a_single_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 80, 16, 4);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--header", "--intercept", "--lambda-s", "1.0", "--lambda-t", "0.7", "--out-dir", s(&out)]);
    let table = std::fs::read_to_string(out.join("criterion_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");
    let model = read_json(&out.join("model.json"));
    assert_eq!(model["lambda_s"], 1.0);
    assert_eq!(model["lambda_t"], 0.7);

    let res = hippo(&["fit", "--data", s(&data), "--header", "--lambda-s", "1.0"]);
    assert!(!res.status.success());
}

#[test]
fn tiny_homoscedastic_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("tiny.csv");
    let rows = [
        "1.2,0.5,-1.1,0.3",
        "-0.4,1.3,0.2,-0.8",
        "0.9,-0.7,0.9,1.4",
        "0.1,0.2,-0.3,-1.2",
        "-1.3,-1.5,1.7,0.6",
        "0.6,0.8,-0.4,0.1",
        "-0.2,-0.1,-1.6,-0.5",
        "1.5,1.1,0.6,0.9",
        "-0.8,-0.3,1.0,-1.7",
        "0.3,0.6,-0.9,0.4",
    ];
    std::fs::write(&data, rows.join("\n") + "\n").unwrap();
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--intercept", "--criterion", "bic", "--fast", "--out-dir", s(&out)]);
    let model = read_json(&out.join("model.json"));
    assert_eq!(model["n"], 10);
    assert_eq!(model["p"], 4);
    assert!(model["theta_support"].as_array().unwrap().is_empty(), "{}", model["theta_support"]);
    assert_eq!(floats(&model["sigma_hat"]).len(), 10);
}

#[test]
fn parse_errors_report_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bad.csv");
    std::fs::write(&data, "y,x1\n1.0,2.0\n3.0,oops\n").unwrap();
    let res = hippo(&["fit", "--data", s(&data), "--header"]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(":3:") && err.contains("oops"), "{err}");

    std::fs::write(&data, "1.0,2.0\n3.0,4.0,5.0\n").unwrap();
    let err = String::from_utf8_lossy(&hippo(&["fit", "--data", s(&data)]).stderr).to_string();
    assert!(err.contains(":2:"), "{err}");

    std::fs::write(&data, "1.0,2.0\n").unwrap();
    let err = String::from_utf8_lossy(&hippo(&["fit", "--data", s(&data)]).stderr).to_string();
    assert!(err.contains("at least 2"), "{err}");
}

#[test]
fn exported_replicate_matches_the_study_runner() {
    let tmp = tempfile::tempdir().unwrap();
    let (n, p, seed) = (100, 20, 21);
    let data = simulate(tmp.path(), n, p, seed);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--header", "--intercept", "--fast", "--criterion", "bic", "--out-dir", s(&out)]);
    let model = read_json(&out.join("model.json"));

    let spec = SimulationSpec::sim2_with_p(n, p, 1, seed).unwrap();
    let cfg = StudyConfig::new(Method::Hippo, &TuningGrid::fast(Criterion::Bic), 1);
    let rep = run_replicate(&spec, &cfg, 0).unwrap();
    let sel = rep.selection(Criterion::Bic, 1).unwrap();
    let m = score(&spec.truth(), &floats(&model["beta"]), &floats(&model["theta"]), true).unwrap();
    assert_eq!(sel.lambda_s, model["lambda_s"].as_f64().unwrap());
    assert_eq!(sel.lambda_t, model["lambda_t"].as_f64().unwrap());
    assert!((sel.metrics.l2_beta - m.l2_beta).abs() < 1e-9);
    assert!((sel.metrics.l2_theta - m.l2_theta).abs() < 1e-9);
    assert_eq!((sel.metrics.pre_beta, sel.metrics.rec_beta), (m.pre_beta, m.rec_beta));
    assert_eq!((sel.metrics.pre_theta, sel.metrics.rec_theta), (m.pre_theta, m.rec_theta));
}

#[test]
fn config_files_in_toml_and_json_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 80, 16, 8);
    let toml = tmp.path().join("c.toml");
    std::fs::write(
        &toml,
        "penalty = { family = \"l1\" }\n[grid]\nlambda_s = { explicit = [2.0, 1.0] }\nlambda_t = { auto = { len = 4, min_ratio = 0.1 } }\n[stage2]\ntol = 1e-7\n",
    )
    .unwrap();
    let json = tmp.path().join("c.json");
    std::fs::write(
        &json,
        r#"{"penalty": {"family": "l1"}, "grid": {"lambda_s": {"explicit": [2.0, 1.0]}, "lambda_t": {"auto": {"len": 4, "min_ratio": 0.1}}}, "stage2": {"tol": 1e-7}}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["fit", "--config", s(&toml), "--data", s(&data), "--header", "--intercept", "--out-dir", s(&a)]);
    ok(&["fit", "--config", s(&json), "--data", s(&data), "--header", "--intercept", "--out-dir", s(&b)]);
    let (ma, mb) = (read_json(&a.join("model.json")), read_json(&b.join("model.json")));
    assert_eq!(ma, mb);
    assert_eq!(ma["config"]["penalty"]["family"], "l1");
    assert_eq!(ma["config"]["stage2"]["tol"], 1e-7);
    let table = std::fs::read_to_string(a.join("criterion_table.csv")).unwrap();
    assert!(table.lines().count() <= 9);

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "penalty = { family = \"scad\", a = 1.5 }\n").unwrap();
    assert!(!hippo(&["fit", "--config", s(&bad), "--data", s(&data), "--header"]).status.success());
}

fn bench_outputs(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

#[test]
fn bench_is_deterministic_and_asserts() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads: &str, extra: &[&str]| {
        let mut args = vec![
            "bench", "--study", "sim2", "--n", "100", "--p", "20", "--replicates", "2", "--seed", "7", "--method", "hippo",
            "--fast", "--ci-coord", "1", "--threads", threads, "--out-dir", s(dir),
        ];
        args.extend_from_slice(extra);
        hippo(&args)
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&a, "1", &[]).status.success());
    assert!(run(&b, "2", &["--assert", "l2_beta<=1000", "--assert", "coverage>=0"]).status.success());
    let (oa, ob) = (bench_outputs(&a), bench_outputs(&b));
    let names: Vec<&str> = oa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["curve_beta_hippo.csv", "curve_theta_hippo.csv", "replicates_hippo.csv", "table.csv"]);
    assert_eq!(oa, ob);
    let table = &oa[3].1;
    // aic and bic, iterations 1 and 2
    assert_eq!(table.lines().count(), 5, "{table}");

    let c = tmp.path().join("c");
    let res = run(&c, "1", &["--assert", "l2_beta<=0"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn bench_sim1_writes_curves_for_both_methods() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "bench", "--study", "sim1", "--n", "60", "--p", "30", "--rho", "0.5", "--replicates", "2", "--method", "both",
        "--criterion", "bic", "--fast", "--out-dir", s(tmp.path()),
    ]);
    let outs = bench_outputs(tmp.path());
    let names: Vec<&str> = outs.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"curve_theta_hippo.csv") && names.contains(&"curve_theta_hhr.csv"), "{names:?}");
    // known mean: no mean path
    assert!(!names.contains(&"curve_beta_hippo.csv"));
    let table = &outs.iter().find(|(n, _)| n == "table.csv").unwrap().1;
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("sim1,60,30,0.5,hippo,bic,1,2,0,"));
}

#[test]
fn thread_settings_are_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 40, 16, 1);
    let res = Command::new(env!("CARGO_BIN_EXE_hippo"))
        .args(["fit", "--data", s(&data), "--header", "--lambda-s", "1", "--lambda-t", "1", "--out-dir", s(tmp.path())])
        .env("HIPPO_THREADS", "0")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("threads"));
    let res = Command::new(env!("CARGO_BIN_EXE_hippo"))
        .args(["fit", "--data", s(&data), "--header", "--lambda-s", "1", "--lambda-t", "1", "--out-dir", s(tmp.path())])
        .env("HIPPO_THREADS", "2")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn simulate_rejects_rho_for_sim2() {
    let tmp = tempfile::tempdir().unwrap();
    let res = hippo(&["simulate", "--study", "sim2", "--rho", "0.3", "--out-dir", s(tmp.path())]);
    assert!(!res.status.success());
}
