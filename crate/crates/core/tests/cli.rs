use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_modham");

fn config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn chain(n: usize, mass: f64, boundary: &str, region: &str, tasks: &str, extra: &str) -> String {
    format!(
        r#"{{"model":{{"n_sites":{n},"mass":{mass},"coupling":1,"boundary":"{boundary}"}},"region":{region},"tasks":{tasks}{extra}}}"#
    )
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn success_exits_zero_and_writes_results() {
    let tmp = TempDir::new().unwrap();
    let body = chain(8, 1.0, "periodic", r#"{"half":{}}"#, r#"["kernels","crosscheck","flow","kms"]"#, "");
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let (code, err) = run(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for f in ["kernels.json", "flow.json", "kms.json", "residuals.json", "metadata.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let res = read_json(&out.join("residuals.json"));
    assert_eq!(res["all_pass"], true);
    let k = read_json(&out.join("kernels.json"));
    assert_eq!(k["m"]["rows"], 4);
    assert_eq!(k["l_block"]["layout"], "phi_then_pi");
    assert_eq!(k["l_block"]["data"].as_array().unwrap().len(), 64);
}

#[test]
fn tolerance_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let body = chain(8, 1.0, "periodic", r#"{"half":{}}"#, r#"["kms"]"#, r#","tolerances":{"kms_tol":1e-15}"#);
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let (code, _) = run(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let res = read_json(&out.join("residuals.json"));
    assert_eq!(res["all_pass"], false);
    assert!(out.join("kms.json").exists());
}

#[test]
fn whole_lattice_region_is_not_standard() {
    let tmp = TempDir::new().unwrap();
    let body = chain(8, 1.0, "dirichlet", r#"{"interval":{"start":0,"length":8}}"#, r#"["kernels"]"#, "");
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let (code, _) = run(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["kind"], "NotStandard");
    assert_eq!(e["exit_code"], 3);
}

#[test]
fn unresolvable_half_chain_exits_three_unless_clipped() {
    let tmp = TempDir::new().unwrap();
    let body = chain(8, 1.0, "dirichlet", r#"{"half":{}}"#, r#"["kernels"]"#, "");
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let (code, _) = run(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert_eq!(read_json(&out.join("error.json"))["kind"], "ModularDivergence");
    let out2 = tmp.path().join("clipped");
    let (code, err) = run(&["run", cfg.to_str().unwrap(), "--clip", "1e-8", "--output-dir", out2.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let k = read_json(&out2.join("kernels.json"));
    assert!(!k["clipped"].as_array().unwrap().is_empty());
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let body = chain(
        8,
        1.0,
        "periodic",
        r#"{"sites":[2,3,4,5]}"#,
        r#"["kernels","flow","kms","entropy_scan"]"#,
        r#","scan":{"lengths":[1,2,3,4,8]},"output":{"formats":["csv","json"]}"#,
    );
    let cfg = config(tmp.path(), &body);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let (code, err) = run(&["run", cfg.to_str().unwrap(), "--output-dir", d.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names.iter().filter(|n| *n != "metadata.json") {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        assert!(a == b, "{name:?} differs between runs");
    }
}

#[test]
fn config_errors() {
    let tmp = TempDir::new().unwrap();
    let (code, _) = run(&["run", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 4);
    let body = chain(8, 1.0, "dirichlet", r#"{"half":{}}"#, r#"["kernels"]"#, r#","extra":1"#);
    let cfg = config(tmp.path(), &body);
    let (code, err) = run(&["check", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("extra"), "{err}");
    let (code, _) = run(&["check", cfg.to_str().unwrap(), "--lenient"]);
    assert_eq!(code, 0);
    let (code, _) = run(&["run", cfg.to_str().unwrap(), "--no-such-flag"]);
    assert_eq!(code, 1);
    let (code, _) = run(&["--version"]);
    assert_eq!(code, 0);
}

#[test]
fn scan_subcommand_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let body = chain(32, 0.1, "dirichlet", r#"{"half":{}}"#, r#"["kernels"]"#, r#","scan":{"lengths":[2,4,32]}"#);
    let cfg = config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let (code, err) = run(&["scan", cfg.to_str().unwrap(), "--format", "csv", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(out.join("entropy_scan.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "length,start,entropy,c_min,c_max,error");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with("NotStandard"));
    assert!(!out.join("kernels.json").exists());
}
