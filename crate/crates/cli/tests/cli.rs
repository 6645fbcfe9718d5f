use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tilereduce::codec;
use tilereduce::pipeline::{read_metadata, tile_path};
use tilereduce::model::TileCoord;

fn tilereduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilereduce")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tilereduce(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(tilereduce(&[]).status.code(), Some(1));
    assert_eq!(tilereduce(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tilereduce(&["build", "-i", "x.geojsonl", "-o", "out", "--budget", "12PB"]).status.code(), Some(1));
    assert_eq!(tilereduce(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = tilereduce(&["build", "-i", "/nonexistent/in.geojsonl", "-o", path(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
    assert_eq!(tilereduce(&["stats", path(dir.path())]).status.code(), Some(2));
}

#[test]
fn build_reduce_stats_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = d.join("cells.geojsonl");
    ok(&["synth", "-o", path(&input), "--features", "2500", "--kind", "tessellation", "--seed", "3"]);

    let base = d.join("base");
    let reduced = d.join("reduced");
    ok(&["build", "-i", path(&input), "-o", path(&base), "--budget", "1MB", "--zooms", "0..5"]);
    ok(&["build", "-i", path(&input), "-o", path(&reduced), "--budget", "8KB", "--zooms", "0..5", "--workers", "1"]);

    let meta = read_metadata(&reduced).unwrap();
    assert_eq!(meta.budget_bytes, 8192);
    assert_eq!(meta.zooms, [0, 5]);
    assert!(meta.tile_status.iter().all(|s| s.bytes <= 8192));
    assert!(meta.tile_status.iter().any(|s| s.sparsified));
    assert_eq!(meta.config["budget"], 8192);

    let table = ok(&["stats", path(&reduced)]);
    assert!(table.lines().count() >= 3);
    let json: serde_json::Value = serde_json::from_str(&ok(&["stats", path(&reduced), "--json"])).unwrap();
    let zooms = json["zooms"].as_array().unwrap();
    let tiles: u64 = zooms.iter().map(|z| z["tiles"].as_u64().unwrap()).sum();
    assert_eq!(tiles as usize, meta.tile_status.len());

    let big = meta.tile_status.iter().map(|s| TileCoord::new(s.z, s.x, s.y)).next().unwrap();
    let src = tile_path(&base, big);
    let named = d.join(format!("z{}x{}y{}.mvt", big.z, big.x, big.y));
    fs::copy(&src, &named).unwrap();
    let report: serde_json::Value = serde_json::from_str(&ok(&["reduce", "-t", path(&named), "--budget", "4KB"])).unwrap();
    let out = d.join(format!("z{}x{}y{}.reduced.mvt", big.z, big.x, big.y));
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.len() <= 4096);
    assert_eq!(report["status"]["bytes"], bytes.len());
    assert_eq!(report["status"]["z"], big.z);
    assert!(codec::decode(&bytes).is_ok());

    let styles = d.join("styles.json");
    fs::write(
        &styles,
        r##"[{"mode":"Categorical","attribute":"class"},{"mode":"Gradient","attribute":"value","palette":["#000000","#ffffff"]}]"##,
    )
    .unwrap();
    let csv = d.join("quality.csv");
    let summary: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "-b", path(&base), "-r", path(&reduced), "-s", path(&styles), "-o", path(&csv)])).unwrap();
    let rows = summary["rows"].as_u64().unwrap() as usize;
    assert_eq!(rows, 2 * meta.tile_status.len());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), rows + 1);
    assert!(d.join("quality.json").exists());
    assert!(summary["spearman_tld_rmse"].as_f64().unwrap() > 0.0);
}

#[test]
fn builds_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = d.join("stars.geojsonl");
    ok(&["synth", "-o", path(&input), "--features", "1500"]);
    let config = d.join("cfg.json");
    fs::write(&config, r#"{"zoom_max": 4, "budget": 4096, "sparsify": {"alpha": 0.3}}"#).unwrap();
    let a = d.join("a");
    let b = d.join("b");
    ok(&["build", "-i", path(&input), "-o", path(&a), "-c", path(&config)]);
    ok(&["build", "-i", path(&input), "-o", path(&b), "-c", path(&config), "--workers", "2"]);
    let ma = read_metadata(&a).unwrap();
    assert_eq!(ma.config["sparsify"]["alpha"], 0.3);
    assert_eq!(ma.zooms, [0, 4]);
    assert_eq!(fs::read(a.join("metadata.json")).unwrap(), fs::read(b.join("metadata.json")).unwrap());
    for s in &ma.tile_status {
        let c = TileCoord::new(s.z, s.x, s.y);
        assert_eq!(fs::read(tile_path(&a, c)).unwrap(), fs::read(tile_path(&b, c)).unwrap());
    }
}
