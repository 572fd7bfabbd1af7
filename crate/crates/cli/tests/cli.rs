use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ringlattice_cli::config::{parse, RunConfig};
use ringlattice_cli::Manifest;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringlattice"))
}

fn recipes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn small_lattice(p: u32, q: u32) -> Value {
    json!({ "nx": 16, "ny": 16, "hole_x": 4, "hole_y": 4,
            "flux": { "rational": { "p": p, "q": q } }, "alpha": 0.0, "hopping": 1.0 })
}

/// A fast config touching most experiment kinds, with disorder.
fn small_config() -> Value {
    json!({
        "name": "small",
        "lattice": small_lattice(1, 3),
        "disorder": { "sigma_diag": 0.05, "sigma_offdiag": 0.05, "seed": 4, "defects": [] },
        "experiments": [
            { "name": "bf", "kind": "butterfly", "grid": { "uniform": { "n": 6 } } },
            { "name": "sp", "kind": "spectrum" },
            { "name": "ss", "kind": "spectro",
              "scans": [{ "site": [1, 5], "strength": 0.5 }],
              "omega": { "range": { "start": -3.0, "stop": 3.0, "step": 0.05 } },
              "fields": [{ "site": [1, 5], "strength": 0.5, "omega": 1.0 }] },
            { "name": "mo", "kind": "momentum", "runs": [[[3, 16], [4, 16], [5, 16]]],
              "strength": 0.1, "omega": 1.2, "k_points": 16 },
            { "name": "dy", "kind": "dynamics", "site": [1, 5], "strength": 2.0, "omega": 1.2,
              "t1": 1.0, "dt": 1.0, "panels": 2, "step": 0.5, "edge": "outer", "realizations": 2 },
            { "name": "ch", "kind": "chern", "q_max": 4, "grid": 8 }
        ]
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_axis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c["experiments"][2]["omega"] = json!({ "range": { "start": 1.0, "stop": 0.0, "step": 0.1 } });
    let path = write(dir.path(), "c.json", &c);
    let o = run(&path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty axis"), "{}", stderr(&o));
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/error.json")).unwrap())
            .unwrap();
    assert_eq!(record["error"], "invalid_config");
}

fn validate(v: &Value) -> (i32, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.json", v);
    let o = bin()
        .arg("validate")
        .arg("--config")
        .arg(path)
        .output()
        .unwrap();
    let d: Value = serde_json::from_slice(&o.stdout).unwrap();
    let list = d["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect();
    (o.status.code().unwrap(), list)
}

#[test]
fn validate_reports_everything_at_once() {
    let mut c = small_config();
    c["lattice"]["flux"] = json!({ "rational": { "p": 2, "q": 4 } });
    c["experiments"][4]["site"] = json!([8, 8]);
    c["experiments"][3]["runs"] = json!([]);
    let (code, d) = validate(&c);
    assert_eq!(code, 2);
    assert!(d.iter().any(|m| m.contains("gcd rule")), "{d:?}");
    assert!(d.iter().any(|m| m.contains("(8, 8)")), "{d:?}");
    assert!(d.len() >= 3, "{d:?}");
}

#[test]
fn pump_in_vacancy_is_named() {
    let mut c: Value =
        serde_json::from_str(&std::fs::read_to_string(recipes().join("fig6.json")).unwrap())
            .unwrap();
    c["experiments"][0]["site"] = json!([12, 12]);
    let (code, d) = validate(&c);
    assert_eq!(code, 2);
    assert_eq!(d.len(), 1, "{d:?}");
    assert!(
        d[0].contains("(12, 12)") && d[0].contains("not an active site"),
        "{d:?}"
    );
}

#[test]
fn recipes_validate_clean() {
    for n in 2..=6 {
        let v: Value = serde_json::from_str(
            &std::fs::read_to_string(recipes().join(format!("fig{n}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(validate(&v), (0, vec![]), "fig{n}");
    }
}

#[test]
fn config_round_trip() {
    let mut all: Vec<RunConfig> = (2..=6)
        .map(|n| {
            parse(&std::fs::read_to_string(recipes().join(format!("fig{n}.json"))).unwrap())
                .unwrap()
        })
        .collect();
    all.push(parse(&small_config().to_string()).unwrap());
    for c in all {
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
    }
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv" || e == "json")
                && !p.ends_with("manifest.json")
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_from_manifest_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.json", &small_config());
    let a = dir.path().join("a");
    let o = run(&path, &a, &["--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config, parse(&small_config().to_string()).unwrap());
    assert_eq!(manifest.threads, 1);
    assert!(
        manifest.files.iter().any(|f| f == "dy_r1_angle.csv"),
        "{:?}",
        manifest.files
    );
    for f in &manifest.files {
        assert!(a.join(f).is_file(), "{f}");
    }

    let b = dir.path().join("b");
    let o = run(&a.join("manifest.json"), &b, &["--threads", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (fa, fb) = (csv_bytes(&a), csv_bytes(&b));
    assert_eq!(fa.len(), manifest.files.len());
    assert!(fa == fb, "outputs differ");
}

#[test]
fn seed_override_changes_disorder() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c["experiments"] = json!([{ "name": "sp", "kind": "spectrum" }]);
    let path = write(dir.path(), "c.json", &c);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("sp.csv")).unwrap();
    for (out, seed) in [("a", None), ("b", Some("4")), ("c", Some("5"))] {
        let extra: Vec<&str> = seed.map(|s| vec!["--seed", s]).unwrap_or_default();
        assert_eq!(
            run(&path, &dir.path().join(out), &extra).status.code(),
            Some(0)
        );
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[i].parse().unwrap())
        .collect()
}

#[test]
fn physical_units() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c["units"] = json!({ "t_mhz": 8.0 });
    let path = write(dir.path(), "c.json", &c);
    assert_eq!(
        run(&path, &dir.path().join("t"), &[]).status.code(),
        Some(0)
    );
    assert_eq!(
        run(&path, &dir.path().join("m"), &["--units", "MHz"])
            .status
            .code(),
        Some(0)
    );
    let (t, m) = (dir.path().join("t"), dir.path().join("m"));

    let (et, em) = (
        column(&t.join("sp.csv"), "energy"),
        column(&m.join("sp.csv"), "energy"),
    );
    assert!(et
        .iter()
        .zip(&em)
        .all(|(a, b)| (8.0 * a - b).abs() < 1e-12 * b.abs().max(1.0)));
    let (wt, wm) = (
        column(&t.join("ss_1_5.csv"), "omega"),
        column(&m.join("ss_1_5.csv"), "omega"),
    );
    assert!(wt
        .iter()
        .zip(&wm)
        .all(|(a, b)| (8.0 * a - b).abs() < 1e-12 * b.abs().max(1.0)));
    // Times: t / (2 pi T/2pi) in microseconds.
    let (tt, tm) = (
        column(&t.join("dy_r0_angle.csv"), "t"),
        column(&m.join("dy_r0_angle.csv"), "t"),
    );
    let s = 1.0 / (std::f64::consts::TAU * 8.0);
    assert!(tt
        .iter()
        .zip(&tm)
        .all(|(a, b)| (a * s - b).abs() < 1e-12 * a.max(1.0)));
    // Photon numbers are unitless.
    assert_eq!(
        column(&t.join("ss_1_5.csv"), "n_sp"),
        column(&m.join("ss_1_5.csv"), "n_sp")
    );
}

#[test]
fn module_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut c: Value =
        serde_json::from_str(&std::fs::read_to_string(recipes().join("fig5.json")).unwrap())
            .unwrap();
    // Gap 2 is closed at p/q = 1/4: no axis can be derived from it.
    let mut e = c["experiments"][0].clone();
    e["omega"]["gap"]["h"] = json!(2);
    e["alpha_frames"] = json!(3);
    c["experiments"] = json!([e]);
    let path = write(dir.path(), "c.json", &c);
    let out = dir.path().join("out");
    let o = run(&path, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let record: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert!(
        record["error"].is_string() && record["message"].is_string(),
        "{record}"
    );
    assert!(out.join("error.json").is_file());
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn bad_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, "{ \"name\": ").unwrap();
    assert_eq!(run(&p, &dir.path().join("o"), &[]).status.code(), Some(2));
    assert_eq!(
        run(&dir.path().join("missing.json"), &dir.path().join("o"), &[])
            .status
            .code(),
        Some(2)
    );
}
