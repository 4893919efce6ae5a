use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exchtail_core::{bound_exp, mixture_tail_probability, ConditionalLaw, MixingDensity, TailEnvelope};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exchtail"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    exe().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn rows(stdout: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8(stdout.to_vec())
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(table: &[Vec<String>], name: &str) -> Vec<f64> {
    let j = table[0].iter().position(|h| h == name).unwrap();
    table[1..].iter().map(|r| r[j].parse().unwrap()).collect()
}

const GAUSSIAN_SCALE: &str = r#"{
  "mixing": {"gamma": 1, "kappa": 2, "c3": 0.5},
  "envelope": {"form": "inverse_power", "c1": 0.5, "alpha": 2, "beta": 2},
  "law": {"family": "gaussian_scale"},
  "grid": {"t_min": 1, "t_max": 3, "points": 3, "n_list": [1, 10], "t_list": [0, 2]},
  "mc": {"trials": 200000, "seed": 5}
}"#;

#[test]
fn bound_unit_family_matches_closed_form() {
    let cfg = configs().join("unit_direct.json");
    let out = run(&["bound", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = rows(&out.stdout);
    assert_eq!(t[0], ["t", "log_bound", "bound", "tol_achieved"]);
    let b = column(&t, "bound");
    assert!((b[0] - 0.5).abs() < 1e-10 && (b[1] - 0.25).abs() < 1e-10, "{b:?}");
    assert!(!String::from_utf8(out.stdout).unwrap().contains('\r'));
}

#[test]
fn bound_below_unit_t_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("unit_direct.json"))
        .unwrap()
        .replace("\"t_min\": 1", "\"t_min\": 0.5");
    let cfg = write_config(dir.path(), "c.json", &body);
    let out = run(&["bound", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("c.json:5:"), "{err}");
}

#[test]
fn invalid_parameter_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = GAUSSIAN_SCALE.replace("\"c3\": 0.5", "\"c3\": -1");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let out = run(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:2: mixing.c3"), "{err}");
    let out = run(&["simulate", "--config", "/nonexistent/x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inverse_reference_rows_match_quadrature() {
    let cfg = configs().join("inverse_power.json");
    let out = run(&["bound", "--config", cfg.to_str().unwrap(), "--rel-tol", "1e-10"]);
    assert!(out.status.success());
    let t = rows(&out.stdout);
    let m = MixingDensity::new(1.0, 2.0, 1.0).unwrap();
    let e = TailEnvelope::inverse(1.0, 2.0, 2.0).unwrap();
    for (t, lb) in column(&t, "t").into_iter().zip(column(&t, "log_bound")) {
        let r = bound_exp(&m, &e, t, 1e-10).unwrap();
        assert!((r.log_value - lb).abs() <= 1e-12 * lb.abs().max(1.0), "t={t}");
    }
    // closed form at t = 1: 2 K1(2)
    assert!((column(&t, "bound")[0] - 0.279_731_763_633_044_85).abs() < 1e-10);
}

#[test]
fn asym_constants_for_reference_family() {
    let cfg = configs().join("inverse_power.json");
    let out = run(&["asym", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let t = rows(&out.stdout);
    assert_eq!(
        t[0],
        [
            "t",
            "value_paper",
            "value_laplace",
            "rate_exponent",
            "rate_constant",
            "c10",
            "c11",
            "A",
            "B"
        ]
    );
    assert!(column(&t, "c11").iter().all(|&c| c == -0.5));
    assert!(column(&t, "rate_exponent").iter().all(|&r| r == 1.0));
    assert!(column(&t, "rate_constant").iter().all(|&r| (r - 2.0).abs() < 1e-12));
}

#[test]
fn simulate_is_reproducible_and_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", GAUSSIAN_SCALE);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = run(&["simulate", "--config", &cfg, "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let t = rows(&a);
    assert_eq!(t[0], ["n", "t", "p_hat", "ci_low", "ci_high", "trials", "seed"]);
    let m = MixingDensity::new(1.0, 2.0, 0.5).unwrap();
    let oracle = mixture_tail_probability(&m, ConditionalLaw::GaussianScale, 2.0, 1e-12)
        .unwrap()
        .value;
    for r in &t[1..] {
        let (tv, p, lo, hi): (f64, f64, f64, f64) = (
            r[1].parse().unwrap(),
            r[2].parse().unwrap(),
            r[3].parse().unwrap(),
            r[4].parse().unwrap(),
        );
        if tv == 0.0 {
            assert_eq!((p, hi), (1.0, 1.0));
        } else {
            assert!(lo <= oracle && oracle <= hi, "{r:?} vs {oracle}");
        }
        assert_eq!(r[6], "5");
    }
}

#[test]
fn seed_and_trials_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", GAUSSIAN_SCALE);
    let out = run(&["simulate", "--config", &cfg, "--seed", "11", "--trials", "1000"]);
    let t = rows(&out.stdout);
    assert!(t[1..].iter().all(|r| r[5] == "1000" && r[6] == "11"));
}

#[test]
fn verify_reference_passes_with_verdict() {
    let cfg = configs().join("gaussian_scale.json");
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let out = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        summary.to_str().unwrap(),
    ]);
    let report = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{report}");
    assert!(report.contains("prefactor verdict: laplace"), "{report}");
    assert!(report.contains("[PASS] aux_integral_ratios"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    assert_eq!(json["failures"], 0);
    assert_eq!(json["verdict"], "laplace");
}

#[test]
fn verify_detects_corrupted_normalizer() {
    let cfg = configs().join("gaussian_scale.json");
    let out = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "20000",
        "--corrupt-c2",
        "1.01",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] normalization"), "{stdout}");
    let json_start = stdout.find('{').unwrap();
    let json: serde_json::Value = serde_json::from_str(&stdout[json_start..]).unwrap();
    assert!(json["failures"].as_u64().unwrap() >= 1);
    assert!(json["failed_checks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c == "normalization"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("normalization"));
}

#[test]
fn sweep_lattice_and_budget() {
    let cfg = configs().join("sweep.json");
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = rows(&out.stdout);
    assert_eq!(t.len() - 1, 12 * 9);
    assert_eq!(
        &t[0][..8],
        ["gamma", "kappa", "c3", "c1", "alpha", "beta", "t", "log_bound"]
    );

    let dir = tempfile::tempdir().unwrap();
    let list: Vec<String> = (1..=10).map(|i| format!("{}", i as f64 / 2.0)).collect();
    let list = format!("[{}]", list.join(", "));
    let body = GAUSSIAN_SCALE.replace(
        "\"mc\"",
        &format!(
            "\"sweep\": {{\"gamma\": {list}, \"kappa\": {list}, \"c3\": {list}, \"c1\": {list}, \"alpha\": {list}}},\n  \"mc\""
        ),
    );
    let big = write_config(dir.path(), "big.json", &body);
    let out = run(&["sweep", "--config", &big]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("100000 points"));
}

#[test]
fn unrepresentable_peak_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
  "mixing": {"gamma": 0, "kappa": 0.001, "c3": 1e-300},
  "envelope": {"form": "inverse_power", "c1": 1, "alpha": 1, "beta": 1},
  "law": {"family": "gaussian_scale"},
  "grid": {"t_min": 1, "t_max": 2, "points": 2, "n_list": [1]}
}"#;
    let cfg = write_config(dir.path(), "far.json", body);
    let out = run(&["bound", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn golden_outputs() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (cmd, cfg) in [
        ("bound", "unit_direct"),
        ("asym", "inverse_power"),
        ("bound", "direct_power"),
    ] {
        let path = configs().join(format!("{cfg}.json"));
        let out = run(&[cmd, "--config", path.to_str().unwrap()]);
        assert!(out.status.success());
        let expected = std::fs::read(golden.join(format!("{cmd}_{cfg}.csv"))).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&expected),
            "{cmd} {cfg}"
        );
    }
}
