use std::path::Path;
use std::process::Command;

fn run(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_graphweyl")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn perturb_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "map = \"doubling\"\nn = [128]\nkappa = 16\nseed = 11\n");
    let a = run(&["perturb", "--config", &cfg, "--out", "a"], dir.path());
    let b = run(&["perturb", "--config", &cfg, "--out", "b"], dir.path());
    assert!(a.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.status.code(), b.status.code());
    let ra = std::fs::read_to_string(dir.path().join("a/perturb.json")).unwrap();
    let rb = std::fs::read_to_string(dir.path().join("b/perturb.json")).unwrap();
    assert_eq!(ra, rb);
    let c = run(&["perturb", "--config", &cfg, "--out", "c", "--seed", "12"], dir.path());
    let rc = std::fs::read_to_string(dir.path().join("c/perturb.json")).unwrap();
    assert!(c.status.code().is_some());
    assert_ne!(ra, rc);
}

#[test]
fn odd_dimension_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n = [101]\n");
    let out = run(&["build", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("101"));
    let bad = write(dir.path(), "d.toml", "nn = [8]\n");
    assert_eq!(run(&["weyl", "--config", &bad], dir.path()).status.code(), Some(2));
}

#[test]
fn failcoord_prints_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"n":[64,128],"out":"fc"}"#);
    let out = run(&["failcoord", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.39182655"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("fc/failcoord.csv")).unwrap();
    assert!(csv.starts_with("n,series_bound,exact_value\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn build_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "map = \"four_legs\"\nn = [16]\nout = \"o\"\n");
    let out = run(&["build", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    assert_eq!(std::fs::metadata(o.join("U_n16.bin")).unwrap().len(), 16 * 16 * 16);
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("U_n16.bin.json")).unwrap()).unwrap();
    assert_eq!(side["n"], 16);
    assert!(o.join("P_n16.csv").exists());
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("build.json")).unwrap()).unwrap();
    assert_eq!(rep["pass"], true);
    assert_eq!(rep["command"], "build");
    assert!(rep.get("timestamp").is_none());
}

#[test]
fn weyl_qe_and_doubling2k_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "n = [64, 128]\nk = [4, 5]\nkappa = 4\narcs = [{ center = 0.5, width = 1.0 }]\n",
    );
    for cmd in ["weyl", "qe", "doubling2k"] {
        let out = run(&[cmd, "--config", &cfg], dir.path());
        assert!(out.status.code().is_some_and(|c| c <= 1), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(format!("out/{cmd}.json")).exists());
    }
    let m = std::fs::read_to_string(dir.path().join("out/multiplicities.csv")).unwrap();
    assert!(m.starts_with("K,j,root_angle,multiplicity\n"));
    let v = std::fs::read_to_string(dir.path().join("out/variance.csv")).unwrap();
    assert!(v.starts_with("n,bin_center,bin_width,variance,bin_count"));
}

#[test]
fn threshold_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n = [64, 128]\n[thresholds]\nvariance_max = 1e-9\n");
    let out = run(&["qe", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/qe.json")).unwrap()).unwrap();
    assert_eq!(rep["pass"], false);
    assert_eq!(rep["thresholds"]["variance_max"], 1e-9);
    let ok = write(dir.path(), "d.toml", "n = [64, 128]\nergodic = false\n[thresholds]\nvariance_max = 1e-9\n");
    assert_eq!(run(&["qe", "--config", &ok], dir.path()).status.code(), Some(0));
}
