use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn lwf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lwf"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lwf(args);
    assert!(
        out.status.success(),
        "lwf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo/run.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One full demo run shared by the stage tests.
fn pipeline_out() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(&["pipeline", "run", "--config", s(&demo_config()), "--out-dir", s(dir.path())]);
        dir
    })
    .path()
}

#[test]
fn pipeline_smoke() {
    let out = pipeline_out();
    for f in ["manifest.json", "decomp.csv", "panel.csv", "tables/regressions.csv", "plots/fitness_rankings.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"complete\""));
}

#[test]
fn missing_input_is_reported_and_nothing_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["demo-data", "--out", s(dir.path())]);
    fs::remove_file(dir.path().join("macro.csv")).unwrap();
    let out_dir = dir.path().join("out");
    let out = lwf(&["pipeline", "run", "--config", s(&dir.path().join("run.toml")), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("macro.csv"));
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn exit_codes_distinguish_usage_and_runtime_errors() {
    assert_eq!(lwf(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(lwf(&["regress", "--panel", "p.csv", "--outcome", "g", "--model", "x"]).status.code(), Some(2));
    assert_eq!(lwf(&["ica", "--panel", "p.csv", "--year", "2010", "--mode", "bogus"]).status.code(), Some(2));
    let missing = lwf(&["regress", "--panel", "/nonexistent/panel.csv", "--outcome", "g"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/panel.csv"));
}

#[test]
fn stages_rerun_from_cached_outputs() {
    let out = pipeline_out();
    let tmp = tempfile::tempdir().unwrap();
    let t = |name: &str| tmp.path().join(name);

    ok(&[
        "decompose",
        "--k",
        "1,2",
        "--scores-dir",
        s(&out.join("scores")),
        "--panel",
        s(&out.join("reconstructed.csv")),
        "--out",
        s(&t("decomp.csv")),
    ]);
    assert_eq!(fs::read(t("decomp.csv")).unwrap(), fs::read(out.join("decomp.csv")).unwrap());

    ok(&["ranks", "--scores-dir", s(&out.join("scores")), "--out", s(&t("ranks.csv"))]);
    assert_eq!(fs::read(t("ranks.csv")).unwrap(), fs::read(out.join("ranks.csv")).unwrap());

    ok(&[
        "efc",
        "--matrix",
        s(&out.join("matrices/ica_2016.csv")),
        "--year",
        "2016",
        "--out",
        s(&t("scores.csv")),
    ]);
    assert_eq!(
        fs::read(t("scores.csv")).unwrap(),
        fs::read(out.join("scores/scores_2016.csv")).unwrap()
    );

    ok(&[
        "ica",
        "--panel",
        s(&out.join("reconstructed.csv")),
        "--year",
        "2016",
        "--out",
        s(&t("ica.csv")),
    ]);
    assert_eq!(fs::read(t("ica.csv")).unwrap(), fs::read(out.join("matrices/ica_2016.csv")).unwrap());
}

#[test]
fn regression_outputs_have_the_documented_layout() {
    let out = pipeline_out();
    let panel = out.join("panel.csv");
    let tmp = tempfile::tempdir().unwrap();
    let reg = tmp.path().join("reg.csv");
    ok(&["regress", "--panel", s(&panel), "--outcome", "g_pct", "--model", "4", "--out", s(&reg)]);
    let text = fs::read_to_string(&reg).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("term,estimate,se,stars,n,r2,within_r2"));
    let terms: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(&terms[..2], ["between", "within"]);

    let loo = tmp.path().join("loo.csv");
    ok(&["loo", "--panel", s(&panel), "--outcome", "g_pct", "--out", s(&loo)]);
    assert_eq!(fs::read_to_string(&loo).unwrap().lines().count(), 1 + 5);

    let stdout = ok(&["regress", "--panel", s(&panel), "--outcome", "r91"]).stdout;
    assert!(String::from_utf8(stdout).unwrap().starts_with("term,estimate,se,stars,n,r2,within_r2\n"));
}

#[test]
fn reconstruction_commands_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let emp = demo_config().with_file_name("employment.csv");
    let filled = tmp.path().join("filled.csv");
    ok(&["reconstruct", "--panel", s(&emp), "--strategy", "1", "--out", s(&filled)]);
    assert!(!fs::read_to_string(&filled).unwrap().contains(",,"));
    let mae = tmp.path().join("mae.csv");
    ok(&["validate-reconstruction", "--panel", s(&emp), "--seed", "7", "--n-seeds", "2", "--out", s(&mae)]);
    let rows = fs::read_to_string(&mae).unwrap().lines().count();
    assert_eq!(rows, 1 + 7 * 5 * 2);
    assert_eq!(lwf(&["reconstruct", "--panel", s(&emp), "--strategy", "9"]).status.code(), Some(2));
}
