use std::path::Path;
use std::process::{Command, Output};

use veloqual_core::fixtures::{at, diamond};
use veloqual_core::synth::{chain_world, SurfaceClass};
use veloqual_core::{run_experiment, LatLon, PipelineParams};

fn veloqual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veloqual")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = veloqual(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
    assert_eq!(veloqual(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(veloqual(&["route", "--sq", "11"]).status.code(), Some(2));
}

#[test]
fn version_is_machine_readable() {
    let out = veloqual(&["--version"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), format!("veloqual {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn missing_input_names_the_file() {
    let out = veloqual(&["aggregate", "/nonexistent/ride-42.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ride-42.csv"));
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ride");
    std::fs::write(&bad, "veloqual-ride v1\nid=x,rate_hz=50,downsampled=0\n#GPS\n1,2\n#MOTION\n").unwrap();
    let out = veloqual(&["preprocess", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.ride") && err.contains("line 4"), "{err}");
}

/// synth → preprocess → aggregate through the binary gives the same bytes as
/// the library's experiment runner.
#[test]
fn cli_pipeline_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let world = chain_world(LatLon::new(52.5, 13.4), &[SurfaceClass::Asphalt, SurfaceClass::FineGravel, SurfaceClass::Cobblestones], 400.0);
    let world_path = dir.path().join("world.json");
    std::fs::write(&world_path, serde_json::to_string_pretty(&world).unwrap()).unwrap();
    let rides_dir = dir.path().join("rides");

    let out = veloqual(&["synth", "--world", s(&world_path), "--rides", "6", "--seed", "5", "--out", s(&rides_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut csvs = Vec::new();
    for i in 0..6 {
        let ride = rides_dir.join(format!("synth-5-{i:05}.ride"));
        let down = dir.path().join(format!("{i}.down.ride"));
        let csv = dir.path().join(format!("{i}.csv"));
        assert!(veloqual(&["downsample", s(&ride), "-o", s(&down)]).status.success());
        let out = veloqual(&["preprocess", s(&down)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(&csv, out.stdout).unwrap();
        csvs.push(csv);
    }
    let mut args = vec!["aggregate", "--jobs", "2"];
    args.extend(csvs.iter().map(|p| s(p)));
    let out = veloqual(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let lib = run_experiment(&world, 6, 5, &PipelineParams::default()).unwrap().to_json();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), lib);

    // raw rides straight into aggregate give the same grid too
    let mut args = vec!["aggregate".to_string()];
    args.extend((0..6).map(|i| rides_dir.join(format!("synth-5-{i:05}.ride")).display().to_string()));
    let out = veloqual(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), lib);
}

#[test]
fn export_and_route() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, grid) = diamond();
    let (gp, grp) = (dir.path().join("d.graph"), dir.path().join("grid.json"));
    std::fs::write(&gp, graph.to_text()).unwrap();
    std::fs::write(&grp, grid.to_json()).unwrap();

    let out = veloqual(&["export", "--grid", s(&grp)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["features"].as_array().unwrap().len(), grid.cells.len());

    let (a, b) = (at(0.0, 0.0), at(400.0, 0.0));
    let (from, to) = (format!("{},{}", a.lat, a.lon), format!("{},{}", b.lat, b.lon));
    let route = |sq: &str| {
        let out = veloqual(&["route", "--graph", s(&gp), "--grid", s(&grp), "--from", &from, "--to", &to, "--sq", sq]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    assert_eq!(route("0")["properties"]["nodes"], serde_json::json!([1, 2, 4]));
    assert_eq!(route("10")["properties"]["nodes"], serde_json::json!([1, 3, 4]));

    let far = veloqual(&["route", "--graph", s(&gp), "--grid", s(&grp), "--from", "0,0", "--to", &to]);
    assert_eq!(far.status.code(), Some(1));
}

#[test]
fn params_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let (_, grid) = diamond();
    let grp = dir.path().join("grid.json");
    std::fs::write(&grp, grid.to_json()).unwrap();
    let bad = dir.path().join("params.json");
    std::fs::write(&bad, r#"{"cell_size_m": 0}"#).unwrap();
    let out = veloqual(&["--params", s(&bad), "export", "--grid", s(&grp)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.json"));
}
