use std::path::Path;
use std::process::{Command, Output};

fn desprit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_desprit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let text = std::fs::read_to_string(configs().join("fig5.toml"))
        .unwrap()
        .replace("trials = 200", "trials = 2")
        .replace("[30, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]", "[50, 100]");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_shipped_presets() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fig2", "fig3", "fig4", "fig5"] {
        let cfg = configs().join(format!("{name}.toml"));
        let out = desprit(&["validate", cfg.to_str().unwrap()], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
    }
}

#[test]
fn spectrum_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fig2.toml");
    let out = desprit(&["spectrum", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("spectral gap"));
    assert!(text.contains("converges: true"));
    assert!(text.lines().any(|l| l.trim() == "1.000000000000"));
}

#[test]
fn run_is_reproducible_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csv = Vec::new();
    for stem in ["a/out", "b/out"] {
        let out = desprit(
            &["run", cfg.to_str().unwrap(), "--trials", "3", "--seed", "9", "--out", stem, "--format", "csv"],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(!dir.path().join(stem).with_extension("json").exists());
        csv.push(std::fs::read(dir.path().join(stem).with_extension("csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv[0].clone()).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains(",3,") || l.contains("analytical")));
}

#[test]
fn full_mode_runs_message_level_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = desprit(
        &["run", cfg.to_str().unwrap(), "--trials", "1", "--mode", "full", "--out", "full", "--format", "json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("full.json")).unwrap();
    assert!(json.contains("\"mode\": \"full\""));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("fig2.toml")).unwrap().replace("trials = 200", "trials = 0");
    std::fs::write(&bad, text).unwrap();
    let out = desprit(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = std::fs::read_to_string(configs().join("fig5.toml"))
        .unwrap()
        .replace("trials = 200", "trials = 2")
        .replace("[30, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]", "[100]")
        .replace("analytical = true", "analytical = false")
        .replace("centralized = true", "centralized = false");
    for xi in ["0.45, 0.99", "3.02, 0.45", "5.61, 0.90", "8.03, 1.46", "8.70, 0.50"] {
        text = text.replace(&format!("{{ xi = [{xi}], sensors = 2 }}"), &format!("{{ xi = [{xi}], sensors = 1 }}"));
    }
    let path = dir.path().join("thin.toml");
    std::fs::write(&path, text).unwrap();
    let out = desprit(&["run", path.to_str().unwrap(), "--out", "thin"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("skipped mc_desprit"));
    assert!(dir.path().join("thin.csv").exists());
}

#[test]
fn unknown_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = desprit(&["preset", "fig9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
