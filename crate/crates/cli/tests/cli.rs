use std::path::Path;
use std::process::{Command, Output};

fn jetext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jetext")).args(args).output().expect("spawn jetext")
}

fn stdout_lines(out: &Output) -> usize {
    String::from_utf8_lossy(&out.stdout).lines().count()
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["provenance"].as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn gen_square_has_one_line_per_lattice_point() {
    let out = jetext(&["gen", "--set", "square", "--h", "2^-8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_lines(&out), 129 * 129);
}

#[test]
fn gen_cantor_depth_three() {
    let out = jetext(&["gen", "--set", "cantor:3"]);
    assert!(out.status.success());
    assert_eq!(stdout_lines(&out), 16);
}

#[test]
fn gen_round_trips_through_points_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cusp.txt");
    let out = jetext(&["gen", "--set", "cusp_out:2", "--h", "2^-6", "-o", file.to_str().unwrap()]);
    assert!(out.status.success());
    let spec = format!("points_file:{}", file.display());
    let again = jetext(&["gen", "--set", &spec]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), std::fs::read_to_string(&file).unwrap());
}

#[test]
fn unknown_family_is_diagnosed() {
    let out = jetext(&["gen", "--set", "dodecahedron"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dodecahedron"));
}

#[test]
fn empty_ladder_is_a_usage_error() {
    let out = jetext(&["lmi", "--set", "disk", "--eps_ladder", ""]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps_ladder"));
}

#[test]
fn unknown_flag_and_help_exit_codes() {
    assert_eq!(jetext(&["lmi", "--colour", "red"]).status.code(), Some(1));
    assert_eq!(jetext(&["--help"]).status.code(), Some(0));
    assert_eq!(jetext(&[]).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "set = square\ncolour = red\n").unwrap();
    let out = jetext(&["gen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn lmi_verdicts_and_expect_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sq");
    let common = ["--h", "2^-6", "--eps_ladder", "2^-3..2^-4", "--max_points", "32", "--points", "2"];
    let mut args = vec!["lmi", "--set", "square", "--expect-pass", "--out", out_dir.to_str().unwrap()];
    args.extend(common);
    let out = jetext(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = without_timestamp(&out_dir.join("lmi.json"));
    assert_eq!(report["payload"]["verdict"]["verdict"], "pass");
    assert_eq!(report["config"]["seed"], 1);
    let csv = std::fs::read_to_string(out_dir.join("lmi.csv")).unwrap();
    assert!(csv.starts_with("x0_1,x0_2,eps,rho_span,band_width,M_2\n"));

    let seg_dir = dir.path().join("seg");
    let mut args = vec!["lmi", "--set", "segment", "--expect-pass", "--out", seg_dir.to_str().unwrap()];
    args.extend(common);
    assert_eq!(jetext(&args).status.code(), Some(3));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out_dir = dir.path().join(tag);
            let o = out_dir.to_str().unwrap().to_string();
            for cmd in ["lmi", "decompose"] {
                let out = jetext(&[
                    cmd, "--set", "cusp_out:2", "--h", "2^-6", "--eps_ladder", "2^-3..2^-4", "--max_points", "16",
                    "--points", "2", "--samples", "300", "--out", &o,
                ]);
                assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
            }
            out_dir
        })
        .collect();
    for file in ["lmi.csv", "cubes.csv"] {
        assert_eq!(std::fs::read(runs[0].join(file)).unwrap(), std::fs::read(runs[1].join(file)).unwrap(), "{file}");
    }
    for file in ["lmi.json", "decompose.json"] {
        let (a, b) = (without_timestamp(&runs[0].join(file)), without_timestamp(&runs[1].join(file)));
        let strip = |mut v: serde_json::Value| {
            v["config"].as_object_mut().unwrap().remove("out");
            v
        };
        assert_eq!(strip(a), strip(b), "{file}");
    }
}

#[test]
fn extend_and_moments_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let out = jetext(&[
        "extend", "--set", "square", "--h", "2^-6", "--jets", "3", "--grid", "3", "--samples", "300", "--out", o,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = without_timestamp(&dir.path().join("extend.json"));
    let rows = report["payload"]["continuity"].as_array().unwrap();
    assert_eq!(rows.len(), 3 * 3);
    for r in report["payload"]["reproduction"].as_array().unwrap() {
        assert_eq!(r["max_error_on_k"].as_f64().unwrap(), 0.0);
        assert!(r["checked"].as_u64().unwrap() > 0);
    }
    let grid = std::fs::read_to_string(dir.path().join("extend_grid.csv")).unwrap();
    for line in grid.lines().skip(1).filter(|l| l.contains(",true,")) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[3], cells[4]);
    }

    let out = jetext(&["moments", "--set", "square", "--h", "2^-6", "--jets", "2", "--points", "2", "--n_max", "3", "--out", o]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = without_timestamp(&dir.path().join("moments.json"));
    assert_eq!(report["payload"]["weight"]["radii"][1].as_f64().unwrap(), 8.0);
    assert_eq!(report["payload"]["convergence"]["rows"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("measures.csv").exists());
}
