mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Stdio};

use common::{error_json, run, snapshot, write_config, write_spheres};
use defectforge_cli::RunConfig;
use defectforge_core::detector::auroc;
use defectforge_core::detector::MetricsReport;
use defectforge_core::geometry::io::{load_annotated, save_cloud};
use defectforge_core::geometry::CloudFormat;
use defectforge_core::pipeline::CorpusManifest;
use defectforge_core::{Point, PointCloud, Vector};

#[test]
fn print_config_round_trips() {
    let r = run(&["--print-config"]);
    assert_eq!(r.code, 0);
    let cfg: RunConfig = toml::from_str(&r.stdout).unwrap();
    assert_eq!(cfg, RunConfig { seed: Some(0), ..Default::default() });

    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("run.json");
    fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let r = run(&["--config", json_path.to_str().unwrap(), "--print-config"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let back: RunConfig = toml::from_str(&r.stdout).unwrap();
    assert_eq!(back.paths.train, dir.path().join("data/train"));
}

#[test]
fn config_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "category = \"x\"\n").unwrap();
    let r = run(&["--config", path.to_str().unwrap(), "batch"]);
    assert_eq!(r.code, 2);
    assert_eq!(error_json(&r)["error"]["code"], "config");
}

#[test]
fn unknown_flag_is_usage_error() {
    let r = run(&["synth", "--bogus"]);
    assert_eq!(r.code, 2);
    assert_eq!(error_json(&r)["error"]["code"], "usage");
}

#[test]
fn synth_writes_cloud_mask_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    write_spheres(dir.path(), "sphere", [1], 1500);
    let input = dir.path().join("sphere1.ply");
    let out = dir.path().join("out");
    let args = ["synth", "--in", input.to_str().unwrap(), "--type", "bump", "--seed", "7", "--out", out.to_str().unwrap()];
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let paths: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(paths.len(), 3);
    for p in &paths {
        assert!(fs::metadata(p).unwrap().len() > 0);
    }
    let masked = load_annotated(paths[1].as_ref(), CloudFormat::PlyAscii).unwrap();
    assert!(masked.mask.unwrap().count() > 0);
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(paths[2]).unwrap()).unwrap();
    assert_eq!(prov["source"], "rule");
    assert_eq!(prov["instruction"]["seed"], 7);

    let first = snapshot(&out);
    assert_eq!(run(&args).code, 0);
    assert_eq!(snapshot(&out), first);
}

#[test]
fn synth_rejects_invalid_instruction_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    write_spheres(dir.path(), "sphere", [1], 1500);
    let instr = dir.path().join("bad.json");
    fs::write(&instr, r#"{"type": "bump", "region": {"anchors": [3]}, "params": {"r": 0.9, "d": 0.7}, "seed": 1}"#).unwrap();
    let r = run(&[
        "synth",
        "--in",
        dir.path().join("sphere1.ply").to_str().unwrap(),
        "--instruction",
        instr.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(r.code, 2);
    let e = error_json(&r);
    let violations = e["error"]["detail"]["violations"].as_array().unwrap();
    assert!(violations.len() >= 2, "{e}");
    assert!(r.stdout.is_empty());
}

#[test]
fn synth_missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "synth",
        "--in",
        dir.path().join("nope.ply").to_str().unwrap(),
        "--type",
        "dent",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(r.code, 3);
    assert_eq!(error_json(&r)["error"]["code"], "io");
}

#[test]
fn batch_manifest_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    write_spheres(&dir.path().join("train"), "n", [1, 2], 1500);
    let cfg = write_config(dir.path(), 3, "bump = 3\ndent = 3\ncrack = 2\nfreeform = 2", "");
    let r = run(&["--config", cfg.to_str().unwrap(), "batch"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let manifest = CorpusManifest::load(r.stdout.trim().as_ref()).unwrap();
    assert_eq!(manifest.entries.len(), 10);
    let sources: std::collections::BTreeSet<_> = manifest.entries.iter().map(|e| e.source_id.clone()).collect();
    assert_eq!(sources.len(), 2);
    let first = snapshot(&dir.path().join("out"));
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "batch"]).code, 0);
    assert_eq!(snapshot(&dir.path().join("out")), first);
}

#[test]
fn batch_zero_counts_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_spheres(&dir.path().join("train"), "n", [1], 800);
    let cfg = write_config(dir.path(), 3, "bump = 0", "");
    let r = run(&["--config", cfg.to_str().unwrap(), "batch"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let manifest = CorpusManifest::load(r.stdout.trim().as_ref()).unwrap();
    assert!(manifest.entries.is_empty());
}

#[test]
fn batch_with_skipped_entries_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // a flat grid: every freeform anchor set is coplanar, so each attempt fails
    let pts = (0..900).map(|i| Point::new((i % 30) as f64 / 29.0, (i / 30) as f64 / 29.0, 0.0)).collect();
    let flat = PointCloud::with_normals("flat", pts, vec![Vector::z(); 900]).unwrap();
    fs::create_dir_all(dir.path().join("train")).unwrap();
    save_cloud(&flat, None, &dir.path().join("train/flat.ply")).unwrap();
    let cfg = write_config(dir.path(), 3, "freeform = 1", "");
    let r = run(&["--config", cfg.to_str().unwrap(), "batch"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let e = error_json(&r);
    assert_eq!(e["error"]["code"], "partial_failure");
    assert_eq!(e["error"]["detail"]["skipped"].as_array().unwrap().len(), 1);
    let manifest = CorpusManifest::load(r.stdout.trim().as_ref()).unwrap();
    assert_eq!(manifest.entries[0].attempts, 5);
}

#[test]
fn fit_writes_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_spheres(&dir.path().join("train"), "n", 0..20, 1000);
    let cfg = write_config(dir.path(), 1, "", "[detector]\nk_feat = 24\nbank_size = 512\n");
    let r = run(&["--config", cfg.to_str().unwrap(), "fit"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let paths: Vec<String> = r.stdout.lines().map(String::from).collect();
    assert_eq!(paths.len(), 2);
    let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "fit"]).code, 0);
    let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn fit_on_empty_train_dir_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("train")).unwrap();
    let cfg = write_config(dir.path(), 1, "", "");
    let r = run(&["--config", cfg.to_str().unwrap(), "fit"]);
    assert_eq!(r.code, 2);
    assert_eq!(error_json(&r)["error"]["code"], "empty_input");
}

#[test]
fn eval_metrics_match_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_spheres(&root.join("train"), "n", 0..6, 1000);
    write_spheres(&root.join("test/good"), "g", 50..54, 1000);
    let cfg = write_config(root, 9, "bump = 2\ndent = 2\ncrack = 2", "[detector]\nk_feat = 24\n");
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(run(&["--config", cfg_s, "fit"]).code, 0);
    let r = run(&["--config", cfg_s, "batch"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    fs::rename(root.join("out/sphere"), root.join("test/defect")).unwrap();

    let missing = run(&["--config", cfg_s, "eval", "--bank", root.join("none.json").to_str().unwrap()]);
    assert_eq!(missing.code, 3);

    let r = run(&["--config", cfg_s, "eval"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let line: serde_json::Value = serde_json::from_str(r.stdout.trim()).unwrap();
    let metrics: MetricsReport =
        serde_json::from_str(&fs::read_to_string(line["metrics"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(metrics.clouds.len(), 10);
    assert_eq!(metrics.clouds.iter().filter(|c| c.anomalous).count(), 6);
    assert_eq!(line["o_roc"].as_f64().unwrap(), metrics.o_roc);

    // recompute both metrics from the overlays and per-cloud object scores
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for c in &metrics.clouds {
        let o = load_annotated(&root.join("out/overlays").join(format!("{}.ply", c.id)), CloudFormat::PlyAscii).unwrap();
        let mask = o.mask.unwrap();
        assert_eq!(mask.count(), c.anomalous_points);
        labels.extend(mask.labels);
        scores.extend(o.scores.unwrap());
    }
    let p = auroc(&labels, &scores).unwrap();
    assert!((p - metrics.p_roc).abs() < 1e-6, "{p} vs {}", metrics.p_roc);
    let obj_labels: Vec<bool> = metrics.clouds.iter().map(|c| c.anomalous).collect();
    let obj_scores: Vec<f64> = metrics.clouds.iter().map(|c| c.object_score).collect();
    assert_eq!(auroc(&obj_labels, &obj_scores).unwrap(), metrics.o_roc);
}

fn spawn_serve(args: &[&str]) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_defectforge"))
        .arg("serve")
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    let url = v["listening"].as_str().unwrap().trim_start_matches("http://").to_string();
    (child, url)
}

fn http_get(addr: &str, path: &str) -> std::io::Result<String> {
    let mut s = TcpStream::connect(addr)?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n")?;
    let mut buf = String::new();
    s.read_to_string(&mut buf)?;
    Ok(buf)
}

#[test]
fn serve_health_and_clean_sigterm() {
    let (mut child, addr) = spawn_serve(&["--port", "0"]);
    let resp = http_get(&addr, "/health").unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains(&format!("\"version\":\"{}\"", env!("CARGO_PKG_VERSION"))));
    let status = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit = child.wait().unwrap();
    assert_eq!(exit.code(), Some(0));
    assert!(http_get(&addr, "/health").is_err());
}

#[test]
fn serve_on_occupied_port_exits_3() {
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let r = run(&["serve", "--port", &port]);
    assert_eq!(r.code, 3);
    assert_eq!(error_json(&r)["error"]["code"], "io");
}
