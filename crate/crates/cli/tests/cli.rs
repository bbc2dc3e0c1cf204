use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nlstefan(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlstefan"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NLSTEFAN_OUT")
        .output()
        .expect("binary runs")
}

fn scenario(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

const TRIVIAL: &str = r#"
variant = "line1fb"
[kernel]
kind = "triangle"
d = 1.0
[grid]
h = 0.1
[time]
t_end = 2.0
record_every = 0.5
[initial]
profile = "zero"
s0 = 0.0
"#;

const BUMP: &str = r#"
# a comment that does not change the hash
variant = "line1fb"
[kernel]
kind = "triangle"
d = 1.0
[grid]
h = 0.05
[time]
t_end = 40.0
record_every = 0.5
snapshots = [10.0, 40.0]
[initial]
profile = "bump"
center = 0.0
radius = 1.0
s0 = 1.0
"#;

/// Data rows of a CSV written by the tool, split into cells.
fn rows(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let comments: Vec<String> = text
        .lines()
        .filter(|l| l.starts_with('#'))
        .map(String::from)
        .collect();
    let mut body = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = body.next().unwrap().split(',').map(String::from).collect();
    let data = body
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (comments, header, data)
}

#[test]
fn trivial_datum_gives_constant_series() {
    let dir = TempDir::new().unwrap();
    let config = scenario(&dir, "still.toml", TRIVIAL);
    let out = dir.path().join("out");
    let res = nlstefan(&["run", config.to_str().unwrap()], &out);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let (comments, header, data) = rows(&out.join("still.series.csv"));
    assert!(comments[0].starts_with("# nlstefan "));
    assert_eq!(header[..4], ["t", "s", "M", "sup_u"]);
    assert_eq!(data.len(), 5);
    for row in &data {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn outputs_carry_version_and_config_hash() {
    let dir = TempDir::new().unwrap();
    let config = scenario(&dir, "bump.toml", BUMP);
    let same = scenario(
        &dir,
        "same.toml",
        BUMP.trim_start_matches("# a comment that does not change the hash\n"),
    );
    let out = dir.path().join("out");
    let res = nlstefan(&["run", config.to_str().unwrap()], &out);
    assert!(res.status.success());
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    let hash = summary["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);

    let res = nlstefan(&["run", same.to_str().unwrap()], &out);
    let other: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(other["config_sha256"], summary["config_sha256"]);

    for name in [
        "bump.series.csv",
        "bump.snapshot000.csv",
        "bump.snapshot001.csv",
    ] {
        let (comments, _, _) = rows(&out.join(name));
        assert_eq!(
            comments[0],
            format!("# nlstefan {}", env!("CARGO_PKG_VERSION"))
        );
        assert_eq!(comments[1], format!("# config_sha256={hash}"));
        assert_eq!(comments[2], "# variant=line1fb");
    }
    let (comments, header, _) = rows(&out.join("bump.snapshot001.csv"));
    assert_eq!(comments[3], "# t=40");
    assert_eq!(header, ["x", "u"]);
    let record: Value =
        serde_json::from_str(&fs::read_to_string(out.join("bump.record.json")).unwrap()).unwrap();
    assert_eq!(record["config_sha256"].as_str(), Some(hash.as_str()));
    assert_eq!(record["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn rates_reports_decay_exponents() {
    let dir = TempDir::new().unwrap();
    let config = scenario(&dir, "bump.toml", BUMP);
    let out = dir.path().join("out");
    assert!(nlstefan(&["run", config.to_str().unwrap()], &out)
        .status
        .success());
    let record = out.join("bump.record.json");
    let res = nlstefan(&["rates", record.to_str().unwrap()], &out);
    // a short run may miss the asymptotic tolerances; the report is written either way
    let code = res.status.code().unwrap();
    assert!(
        code == 0 || code == 3,
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rates: Value =
        serde_json::from_str(&fs::read_to_string(out.join("bump.rates.json")).unwrap()).unwrap();
    assert_eq!(rates["passed"].as_bool(), Some(code == 0));
    for key in ["sup_u", "M"] {
        let e = rates["fits"][key]["exponent"].as_f64().unwrap();
        assert!(e < 0.0, "{key}: {e}");
    }
    let checks = rates["checks"].as_array().unwrap();
    let conservation = checks
        .iter()
        .find(|c| c["name"] == "conservation_defect")
        .unwrap();
    assert_eq!(conservation["pass"], true);
}

#[test]
fn correctors_tabulates_both_profiles() {
    let dir = TempDir::new().unwrap();
    let config = scenario(&dir, "bump.toml", BUMP);
    let out = dir.path().join("out");
    let res = nlstefan(&["correctors", config.to_str().unwrap()], &out);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("bump.correctors.json")).unwrap())
            .unwrap();
    let q = summary["q"].as_f64().unwrap();
    assert!((q - 1.0 / 12.0).abs() < 1e-3, "{q}");
}

#[test]
fn oracle_check_passes() {
    let dir = TempDir::new().unwrap();
    let res = nlstefan(&["oracle-check"], dir.path());
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["cases"].as_array().unwrap().len(), 4);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(nlstefan(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        nlstefan(&["run", "/nonexistent.toml"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        nlstefan(&["oracle-check", "--suite", "torus"], dir.path())
            .status
            .code(),
        Some(1)
    );
    let bad = scenario(
        &dir,
        "bad.toml",
        &TRIVIAL.replace("d = 1.0", "d = 1.0\nwidth = 3"),
    );
    assert_eq!(
        nlstefan(&["run", bad.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(nlstefan(&["--help"], dir.path()).status.code(), Some(0));
}
