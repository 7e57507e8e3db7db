use std::path::Path;
use std::process::{Command, Output};

fn sieve_lab(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sieve-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const QUADRATIC: &str = r#"
seed = 4
[frame]
p = 1
p1 = 2
p_max = 6
[model]
kind = "quadratic"
instances = 5
[sampling]
delta_samples = 32
b_samples = 32
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn certify_writes_bounds_above_measured_bias_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUADRATIC);
    let out = tmp.path().join("out");
    let res = sieve_lab(&["certify"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("certificate.csv")).unwrap();
    let hat = column(&csv, "hat_alpha");
    let bias = column(&csv, "measured_bias");
    assert_eq!(hat.len(), 5);
    assert!(hat.iter().zip(&bias).all(|(h, b)| h >= b));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["mode"], "certify");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUADRATIC);
    let out = tmp.path().join("out");
    let res = sieve_lab(&["audit", "--seed", "99"], &cfg, &out);
    assert!(res.status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 99"));
}

#[test]
fn missing_field_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &QUADRATIC.replace("p1 = 2\n", ""));
    let res = sieve_lab(&["certify", "--threads", "1"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("p1") && err.contains("line"), "{err}");
}

#[test]
fn numerical_failure_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
seed = 1
[frame]
p = 1
p1 = 2
p_max = 8
[model]
kind = "single_index"
[truth]
theta_star = [0.6, 0.0, 0.8]
smoothness = 3.0
sigma = 0.1
coefficients = 7
"#;
    let cfg = write(tmp.path(), "si.toml", text);
    let res = sieve_lab(&["audit"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn rates_reports_slopes_next_to_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
mode = "rates"
seed = 0
[truth]
theta_star = [0.6, 0.8]
smoothness = 3.0
sigma = 0.1
coefficients = 63
[population]
angle_nodes = 512
chord_nodes = 16
[rates]
m_list = [4, 8, 16, 32]
p_max = 64
[output]
plots = true
"#;
    let cfg = write(tmp.path(), "r.toml", text);
    let out = tmp.path().join("out");
    assert!(sieve_lab(&["rates"], &cfg, &out).status.success());
    let slopes = std::fs::read_to_string(out.join("rate_slopes.csv")).unwrap();
    assert!(slopes.starts_with("quantity,slope,expected\nalpha_m,"));
    let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().next().unwrap(), "m,alpha_m,beta_m,tau_m,hkappa_sq,cross_term_max");
    assert!(std::fs::read_to_string(out.join("rates.svg")).unwrap().starts_with("<svg"));
}
