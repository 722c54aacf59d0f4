use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
source = [0.65, 0.35]
channel = [[0.9, 0.1], [0.2, 0.8]]
n = 6
n_list = [6, 8]
rate = 0.15
delta = 0.1
epsilon = 0.02
trials = 50
seed = 11
decoders = ["universal", "mmi"]

[policy]
strategy = "identity_if_allowed"

[constraint]
kind = "excess_probability"
rate = 0.2
excess_exponent = 1.0

[exponents]
predict = false
"#;

fn vqid(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vqid"));
    cmd.args(args).env_remove("IDENT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn typeclass_count_is_exact() {
    let o = vqid(&["typeclass", "count", "--counts", "2,2"], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["size"], "6");
}

#[test]
fn simulate_writes_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let a = vqid(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "decoder,n,trials,errors,p_hat,ci_lo,ci_hi,emp_exponent");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert_eq!(std::fs::read_to_string(out.join("errors.csv")).unwrap(), text);
    assert!(out.join("summary.json").exists());
    let b = vqid(&["simulate", "--config", &cfg], &[]);
    assert_eq!(stdout(&b), text);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let base = ["simulate", "--config", cfg.as_str(), "--trials", "200", "--n", "8"];
    let configured = stdout(&vqid(&base, &[]));
    let from_env = stdout(&vqid(&base, &[("IDENT_SEED", "99")]));
    let mut flagged = base.to_vec();
    flagged.extend(["--seed", "99"]);
    let from_flag = stdout(&vqid(&flagged, &[("IDENT_SEED", "5")]));
    assert_ne!(configured, from_env);
    assert_eq!(from_env, from_flag);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("[0.65, 0.35]", "[0.65, 0.45]"));
    assert_eq!(vqid(&["simulate", "--config", &cfg], &[]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    let o = vqid(&["exponent", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_registry_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = vqid(&["diagnose", "injectivity", "--config", &cfg, "--n", "4"], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = vqid(&["diagnose", "injectivity", "--config", &cfg], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn user_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[caps]\nmax_users = 2\n"));
    let o = vqid(&["simulate", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn skipped_decoder_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[caps]\nbrute_force_cap = 16\n"));
    let o = vqid(&["simulate", "--config", &cfg, "--decoders", "mmi,exact_ml", "--n", "6"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped exact_ml"));
}
