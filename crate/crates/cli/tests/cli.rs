use std::fs;
use std::process::{Command, Output};

fn empart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_empart"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn figure_has_thirty_rows() {
    let o = empart(&["figure"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,r,bound");
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[2], "2,0.592593,0.500000");
    assert!(lines[1].starts_with("1,0.48299"));
    assert!(lines[30].starts_with("30,"));
}

#[test]
fn figure_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let o = empart(&["figure", "--max-d", "5", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 6);
}

#[test]
fn list_models_shows_schemas() {
    let o = empart(&["list-models"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "arctan2d",
        "gbm1d",
        "bm_identity",
        "model.params.sigma",
        "model.params.d",
    ] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

fn write_config(dir: &tempfile::TempDir, text: &str) -> String {
    let path = dir.path().join("exp.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "model = arctan2d
schemes = equidistant, moving_sphere
n.equidistant = 25
n.moving_sphere = 17
paths = 1500
";

#[test]
fn run_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SMALL);
    let one = Command::new(env!("CARGO_BIN_EXE_empart"))
        .args(["run", "--config", &cfg])
        .env("EMPART_WORKERS", "1")
        .output()
        .unwrap();
    let three = Command::new(env!("CARGO_BIN_EXE_empart"))
        .args(["run", "--config", &cfg])
        .env("EMPART_WORKERS", "3")
        .output()
        .unwrap();
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, three.stdout);
    let text = stdout(&one);
    assert!(text.starts_with("scheme,n,coordinate,mean,m2,m3,m4,"));
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("\nmoving_sphere,17,2,"));
}

#[test]
fn run_writes_out_file_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SMALL);
    let out = dir.path().join("r.csv");
    // the document's resolutions refer to schemes the override removed
    let o = empart(&["run", "--config", &cfg, "--set", "schemes=sphere_hitting"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("n.equidistant"));

    let cfg = write_config(
        &dir,
        "model = gbm1d\nschemes = sphere_hitting\nn.sphere_hitting = 10\n",
    );
    let o = empart(&[
        "run",
        "--config",
        &cfg,
        "--set",
        "paths=200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("sphere_hitting,10,1,"));
    assert!(text.trim_end().ends_with(",200,0"));
}

#[test]
fn table_prints_schemes_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, SMALL);
    let o = empart(&["table", "--config", &cfg, "--set", "paths=500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("equidistant n=25"));
    assert!(text.contains("moving_sphere n=17"));
    assert!(text.contains("E[E^2] x2"));
    assert!(text.contains("predicted"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        ("", "model"),
        (
            "model = gbm1d\nschemes = equidistant\nn.equidistant = 5\npaths = -5",
            "paths",
        ),
        (
            "model = gbm1d\nschemes = equidistant\nn.equidistant = 5\nhorizon = -1",
            "horizon",
        ),
        ("model = gbm1d\nschemes = equidistant\n", "n.equidistant"),
        ("model = gbm1d\nbogus line\n", "line 2"),
    ] {
        let cfg = write_config(&dir, text);
        let o = empart(&["run", "--config", &cfg]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
}

#[test]
fn run_requires_config() {
    let o = empart(&["run"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn bad_worker_count_is_reported() {
    let o = Command::new(env!("CARGO_BIN_EXE_empart"))
        .arg("figure")
        .env("EMPART_WORKERS", "zero")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("EMPART_WORKERS"));
}

#[test]
fn verify_passes() {
    let o = empart(&["verify", "--samples", "4000"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().count() >= 6);
    assert!(text.lines().all(|l| l.starts_with("pass: ")));
}
