use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fpaccel_cli::methods::Theory;
use serde_json::Value;

fn fpaccel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpaccel"))
        .args(args)
        .env("FPACCEL_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn traces(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap().to_string_lossy();
            n.starts_with("trace_") && n.ends_with(".csv")
        })
        .collect();
    v.sort();
    v
}

fn is_float17(cell: &str) -> bool {
    let (mantissa, exp) = match cell.split_once('e') {
        Some(x) => x,
        None => return false,
    };
    let digits = mantissa.trim_start_matches('-');
    digits.len() == 18 && digits.as_bytes()[1] == b'.' && exp.parse::<i32>().is_ok()
}

#[test]
fn minimal_config_writes_eleven_trace_rows() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.json")).unwrap();
    let cfg = write_config(dir.path(), "minimal.json", &body);
    let out = fpaccel(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let files = traces(&dir.path().join("out"));
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,f,gnorm,rnorm,fgap");
    assert_eq!(lines.len(), 12);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[1..].iter().all(|c| is_float17(c)), "{line}");
    }
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn unknown_method_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"schema_version\": 1,\n  \"seed\": 1,\n  \"methods\": [\n    {\"method\": \"gradient_magic\"}\n  ]\n}\n",
    );
    let out = fpaccel(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("methods[0].method"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn missing_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "noseed.json", r#"{"schema_version": 1, "methods": [{"method": "fp"}]}"#);
    let out = fpaccel(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`seed`"), "{}", stderr(&out));
}

#[test]
fn bad_cli_arguments_exit_2() {
    let out = fpaccel(&["table", "not_a_table", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fpaccel(&["spectrum", "x.json", "--alpha", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "diverge.json",
        r#"{"schema_version": 1, "seed": 1,
            "problem": {"synthetic": {"collinearity": 0.5}},
            "budget": {"max_iter": 200},
            "analysis": {"spectrum": false, "bounds": false},
            "methods": [{"method": "fp"}, {"method": "fp", "map": "sd", "alpha": 5.0}]}"#,
    );
    let out = fpaccel(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let files = traces(&dir.path().join("out"));
    assert_eq!(files.len(), 2);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let methods = report["instances"][0]["methods"].as_array().unwrap();
    assert_eq!(methods[1]["status"], "diverged");
    let partial = std::fs::read_to_string(&files[1]).unwrap();
    assert!(partial.lines().count() >= 2);
}

#[test]
fn run_report_theory_values_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "theory.json",
        r#"{"schema_version": 1, "seed": 2,
            "problem": {"synthetic": {"collinearity": 0.5}},
            "budget": {"max_iter": 150},
            "methods": [
              {"method": "fp"},
              {"method": "saa", "betas": "optimal"},
              {"method": "sngmres_r", "betas": "optimal"},
              {"method": "fp", "map": "sd", "alpha": "optimal", "warm_start": 20},
              {"method": "saa", "map": "sd", "alpha": "optimal", "betas": "optimal", "warm_start": 20},
              {"method": "saa", "map": "sd", "alpha": "one_over_l", "betas": "optimal", "warm_start": 20},
              {"method": "sngmres_r", "map": "sd", "alpha": "optimal", "betas": "optimal", "warm_start": 20},
              {"method": "saa", "betas": [0.3]}
            ]}"#,
    );
    let out = fpaccel(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let inst = &report["instances"][0];
    assert_eq!(inst["excluded"], 6);
    let mut checked = 0;
    for m in inst["methods"].as_array().unwrap() {
        let theory: Theory = serde_json::from_value(m["theory"].clone()).unwrap();
        if let Some(r) = theory.recompute() {
            assert!((r - theory.rho).abs() <= 1e-12 * theory.rho.max(1.0), "{}", m["label"]);
            checked += 1;
        }
        assert!(!theory.provenance.is_empty());
    }
    assert_eq!(checked, 7);
}

#[test]
fn spectrum_sd_reports_one_minus_alpha_ell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spec.json",
        r#"{"schema_version": 1, "seed": 1,
            "problem": {"synthetic": {"collinearity": 0.5}},
            "methods": [{"method": "fp"}]}"#,
    );
    let json_path = dir.path().join("sd.json");
    let out = fpaccel(&[
        "spectrum",
        cfg.to_str().unwrap(),
        "--map",
        "sd",
        "--method",
        "saa1",
        "--alpha",
        "one_over_l",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let (alpha, ell) = (v["alpha"].as_f64().unwrap(), v["ell"].as_f64().unwrap());
    let rho = v["rho_qprime"].as_f64().unwrap();
    assert!((rho - (1.0 - alpha * ell)).abs() <= 1e-10, "{rho} vs {}", 1.0 - alpha * ell);
    assert_eq!(v["excluded"], 6);
    assert!(v["rho_companion"].as_f64().unwrap() < 1.0);

    let als = fpaccel(&["spectrum", cfg.to_str().unwrap(), "--method", "sngmresr1"]);
    assert!(als.status.success(), "{}", stderr(&als));
}

#[test]
fn tables_have_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tables.json",
        r#"{"schema_version": 1, "seed": 1,
            "problem": {"synthetic": {"collinearity": 0.5}},
            "budget": {"max_iter": 200},
            "methods": [{"method": "fp"}]}"#,
    );
    let cases = [
        ("als_bounds", "seed,rho_qprime,r1,r2,rho_p,rho_p_n,rho_weaker,delta1,delta2,a_star,rho_bf,beta_bf"),
        (
            "sd_factors",
            "seed,kappa_bar,rho_sd,rho_saa_one_over_l,rho_saa_opt,rho_sngmres_r,alpha_sd,alpha_saa_one_over_l,\
             beta_saa_one_over_l,alpha_saa_opt,beta_saa_opt,alpha_sngmres_r,beta_sngmres_r,rho_qprime_als,\
             rho_saa1_als,rho_hat_als,rho_hat_saa1_als",
        ),
    ];
    for (kind, header) in cases {
        let out = fpaccel(&["table", kind, cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{kind}: {}", stderr(&out));
        let text = std::fs::read_to_string(dir.path().join(format!("out/table_{kind}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), header);
        assert_eq!(lines.count(), 1);
    }
}
