#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use defectforge_core::geometry::io::save_cloud;
use defectforge_core::pipeline::augment::random_rotation;
use defectforge_core::{rng, Point, PointCloud, Vector};

/// Unit-sphere Fibonacci lattice, randomly rotated, with tangential Gaussian
/// jitter of `jitter` times the mean point spacing. Normals are radial.
pub fn fib_sphere(n: usize, seed: u64, jitter: f64) -> PointCloud {
    let mut r = rng::seeded(seed);
    let rot = random_rotation(&mut r);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let pts: Vec<Point> = (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rr = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let p = Vector::new(rr * t.cos(), rr * t.sin(), z);
            let j = Vector::new(rng::gaussian(&mut r, 1.0), rng::gaussian(&mut r, 1.0), rng::gaussian(&mut r, 1.0));
            let p = (p + (j - p * p.dot(&j)) * jitter * spacing).normalize();
            Point::from(rot * p)
        })
        .collect();
    let normals = pts.iter().map(|p| p.coords).collect();
    PointCloud::with_normals(format!("sphere-{seed}"), pts, normals).unwrap()
}

/// Writes `fib_sphere(n, s, 0.05)` for each seed as `<dir>/<prefix><s>.ply`.
pub fn write_spheres(dir: &Path, prefix: &str, seeds: impl IntoIterator<Item = u64>, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for s in seeds {
        save_cloud(&fib_sphere(n, s, 0.05), None, &dir.join(format!("{prefix}{s}.ply"))).unwrap();
    }
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["defectforge"];
    full.extend_from_slice(args);
    let code = defectforge_cli::run_with(full, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn error_json(r: &Run) -> serde_json::Value {
    serde_json::from_str(r.stderr.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {}", r.stderr))
}

/// Writes a TOML config with relative paths `train`, `test`, `out`.
pub fn write_config(root: &Path, seed: u64, counts: &str, extra: &str) -> PathBuf {
    let path = root.join("run.toml");
    let text = format!(
        "category = \"sphere\"\nseed = {seed}\n\n[paths]\ntrain = \"train\"\ntest = \"test\"\nout = \"out\"\n\n[synthesis.counts]\n{counts}\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
