//! Structured output compared against checked-in documents. Regenerate with
//! `ICTMC_UPDATE_GOLDEN=1 cargo test -p ictmc-cli --test golden`.

use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

const REL_TOL: f64 = 1e-9;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Value {
    let problems = root().join("../../problems");
    let args: Vec<String> = args
        .iter()
        .map(|a| match a.strip_prefix("@") {
            Some(name) => problems.join(name).display().to_string(),
            None => a.to_string(),
        })
        .collect();
    let out = Command::new(env!("CARGO_BIN_EXE_ictmc"))
        .args(&args)
        .args(["--output", "structured"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v["problem"] = Value::Null;
    v
}

fn same(path: &str, a: &Value, b: &Value) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= REL_TOL * x.abs().max(y.abs()).max(1e-3) {
                Ok(())
            } else {
                Err(format!("{path}: {x} != {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: length {} != {}", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .try_for_each(|(i, (p, q))| same(&format!("{path}[{i}]"), p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            let kx: Vec<_> = x.keys().collect();
            let ky: Vec<_> = y.keys().collect();
            if kx != ky {
                return Err(format!("{path}: fields {kx:?} != {ky:?}"));
            }
            x.iter().try_for_each(|(k, v)| same(&format!("{path}.{k}"), v, &y[k]))
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} != {b}")),
    }
}

fn check(name: &str, args: &[&str]) {
    let actual = run(args);
    let file = root().join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("ICTMC_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(file.parent().unwrap()).unwrap();
        std::fs::write(&file, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    if let Err(e) = same("$", &actual, &expected) {
        panic!("{name} differs from {}: {e}", file.display());
    }
}

#[test]
fn example1_solve_upper() {
    check(
        "example1_solve_upper",
        &["solve", "--problem", "@example1.toml", "--h=-0.7,1.7,-1", "--T", "1", "--max-error", "1e-3", "--upper"],
    );
}

#[test]
fn example1_compare() {
    check(
        "example1_compare",
        &["compare", "--problem", "@example1.toml", "--h=-0.7,1.7,-1", "--max-error", "1e-2", "--upper"],
    );
}

#[test]
fn example1_info() {
    check("example1_info", &["info", "--problem", "@example1.toml"]);
}

#[test]
fn example2_info() {
    check("example2_info", &["info", "--problem", "@example2.toml"]);
}

#[test]
fn example2_bounds_state0() {
    check(
        "example2_bounds_state0",
        &["bounds", "--problem", "@example2.toml", "--state", "0", "--T", "1", "--max-error", "1e-3"],
    );
}
