use std::path::Path;
use std::process::Command;

use locfloer_cli::strip_timing;
use serde_json::Value;

fn locfloer(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_locfloer"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove(locfloer_cli::JOBS_ENV)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn smith_row_for_the_monkey_saddle() {
    let dir = tempfile::tempdir().unwrap();
    let out = locfloer(&["smith", "--family", "monkey-saddle", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("smith.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2, "{csv}");
    assert!(rows[1].ends_with("0,2,strict,pass"), "{csv}");
    let m = manifest(dir.path());
    assert_eq!(m["summary"]["total"], 1);
    assert_eq!(m["schema_version"], 1);
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "seed = 3\nprimez = [2]\n").unwrap();
    let out = locfloer(&["cz", "--config", config.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("primez"));

    std::fs::write(&config, "primes = [2]\n").unwrap();
    let out = locfloer(&["cz", "--config", config.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn failing_check_exits_1_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("wrong.toml");
    let text = "seed = 1\n[[fields]]\nname = \"saddle-2d\"\nexpect_betti = [1, 0, 0]\n";
    std::fs::write(&config, text).unwrap();
    let out = locfloer(&["degree", "--config", config.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degree saddle-2d"));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    let text = r#"
seed = 11
primes = [2, 3]
[cz]
random_paths = 40
chain_multisets = 20
[[cz.paths]]
name = "r"
blocks = ["rotation:2/5"]
[[fields]]
name = "monkey-saddle"
[[fields]]
name = "saddle-2d"
"#;
    std::fs::write(&config, text).unwrap();
    let (a, b) = (dir.path().join("serial"), dir.path().join("parallel"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = locfloer(&["suite", "--config", config.to_str().unwrap(), "--jobs", jobs], out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(strip_timing(manifest(&a)), strip_timing(manifest(&b)));
}

#[test]
fn jobs_from_the_environment_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_locfloer"))
        .args(["cz", "--family", "none", "--out"])
        .arg(dir.path())
        .env(locfloer_cli::JOBS_ENV, "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
