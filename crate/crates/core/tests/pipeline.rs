mod common;

use std::collections::BTreeMap;
use std::fs;

use defectforge_core::geometry::io::load_annotated;
use defectforge_core::geometry::voxel::voxel_key;
use defectforge_core::geometry::CloudFormat;
use defectforge_core::instruction::CategoryMetadata;
use defectforge_core::pipeline::batch::{EntryStatus, MANIFEST_FILE};
use defectforge_core::pipeline::sdn::{normalize_cloud, pool_mask};
use defectforge_core::pipeline::{apply_sdn, batch_synthesize, fit_sdn_profile, AugmentConfig, BatchRequest, CorpusManifest};
use defectforge_core::rng;
use defectforge_core::{AnomalyMask, DefectType, Point, PointCloud};

use common::sphere;

fn blob(n: usize, seed: u64, offset: [f64; 3], scale: f64) -> PointCloud {
    let mut r = rng::seeded(seed);
    let pts = (0..n)
        .map(|_| {
            Point::new(
                offset[0] + scale * rng::uniform(&mut r, -1.0, 1.0),
                offset[1] + scale * rng::uniform(&mut r, -0.5, 0.5),
                offset[2] + scale * rng::standard_normal(&mut r),
            )
        })
        .collect();
    PointCloud::new(format!("blob{seed}"), pts).unwrap()
}

#[test]
fn training_clouds_fit_inside_the_unit_ball() {
    let train: Vec<PointCloud> = (0..4).map(|s| blob(800, s, [3.0, -1.0, 2.0], 5.0)).collect();
    let profile = fit_sdn_profile(&train, "blob", 0.03).unwrap();
    for c in &train {
        let n = normalize_cloud(c, &profile).unwrap();
        for p in n.points() {
            assert!(p.coords.norm() <= 1.0 + 1e-9);
        }
        let reduced = apply_sdn(c, &profile).unwrap();
        for p in reduced.cloud.points() {
            assert!(p.coords.norm() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn inverse_map_recovers_coordinates() {
    let c = blob(1000, 9, [10.0, 0.0, -4.0], 3.0);
    let profile = fit_sdn_profile(std::slice::from_ref(&c), "blob", 0.03).unwrap();
    let n = normalize_cloud(&c, &profile).unwrap();
    for (a, b) in c.points().iter().zip(n.points()) {
        assert!((profile.denormalize_point(b) - a).norm() <= 1e-9);
    }
}

#[test]
fn pooled_labels_match_brute_force() {
    let c = blob(3000, 2, [0.0; 3], 1.0);
    let profile = fit_sdn_profile(std::slice::from_ref(&c), "blob", 0.03).unwrap();
    let mut r = rng::seeded(4);
    let labels: Vec<bool> = (0..c.len()).map(|_| rng::uniform(&mut r, 0.0, 1.0) < 0.02).collect();
    let mask = AnomalyMask { labels: labels.clone(), defect: None };
    let reduced = apply_sdn(&c, &profile).unwrap();
    let pooled = pool_mask(&mask, &reduced);
    let normalized = normalize_cloud(&c, &profile).unwrap();
    // Oracle: for each output point, scan every source point sharing its voxel.
    let keys: Vec<[i64; 3]> = normalized.points().iter().map(|p| voxel_key(p, profile.voxel_size)).collect();
    for (j, out) in reduced.cloud.points().iter().enumerate() {
        let members: Vec<usize> = (0..c.len()).filter(|&i| reduced.index_map[i] == j).collect();
        assert!(!members.is_empty());
        let key = keys[members[0]];
        assert!(members.iter().all(|&i| keys[i] == key));
        let expected = (0..c.len()).filter(|&i| keys[i] == key).any(|i| labels[i]);
        assert_eq!(pooled.labels[j], expected);
        let centroid = members.iter().fold(Point::origin(), |acc, &i| acc + normalized.points()[i].coords)
            / members.len() as f64;
        assert!((centroid - out).norm() < 1e-12);
    }
}

fn request<'a>(
    sources: &'a [PointCloud],
    profile: &'a defectforge_core::pipeline::SdnProfile,
    meta: &'a CategoryMetadata,
    counts: BTreeMap<DefectType, usize>,
    out: &'a std::path::Path,
) -> BatchRequest<'a> {
    BatchRequest {
        sources,
        profile,
        counts,
        augment: None,
        meta,
        seed: 42,
        out_dir: out,
        endpoint: None,
    }
}

#[test]
fn three_bumps_on_one_source() {
    let sources = vec![sphere(1500, 1)];
    let profile = fit_sdn_profile(&sources, "sphere", 0.03).unwrap();
    let meta = CategoryMetadata::new("sphere").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let counts = BTreeMap::from([(DefectType::Bump, 3)]);
    let m = batch_synthesize(&request(&sources, &profile, &meta, counts, dir.path())).unwrap();
    assert_eq!(m.entries.len(), 3);
    let corpus = dir.path().join("sphere");
    let plys = fs::read_dir(&corpus)
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name().into_string().unwrap();
            name.ends_with(".ply") && !name.ends_with(".mask.ply")
        })
        .count();
    assert_eq!(plys, 3);
    let mut seeds: Vec<u64> = m.entries.iter().map(|e| e.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 3);
    for e in &m.entries {
        assert_eq!(e.status, EntryStatus::Ok);
        let cloud = load_annotated(&corpus.join(e.cloud_file.as_ref().unwrap()), CloudFormat::PlyAscii).unwrap();
        let masked = load_annotated(&corpus.join(e.mask_file.as_ref().unwrap()), CloudFormat::PlyAscii).unwrap();
        let mask = masked.mask.unwrap();
        assert_eq!(mask.len(), cloud.cloud.len());
        assert!(mask.count() > 0);
    }
}

#[test]
fn corpus_is_byte_identical_across_runs_and_thread_counts() {
    let sources = vec![sphere(1200, 1), sphere(1200, 2)];
    let profile = fit_sdn_profile(&sources, "sphere", 0.03).unwrap();
    let meta = CategoryMetadata::new("sphere").unwrap();
    let counts: BTreeMap<DefectType, usize> = DefectType::ALL.iter().map(|&u| (u, 1)).collect();
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut req = request(&sources, &profile, &meta, counts.clone(), dir.path());
        req.augment = Some(AugmentConfig {
            rotation: true,
            ..Default::default()
        });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| batch_synthesize(&req).unwrap());
        let corpus = dir.path().join("sphere");
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&corpus)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = run(1);
    assert_eq!(a.len(), 2 * 8 + 1);
    assert!(a.iter().any(|(n, _)| n == MANIFEST_FILE));
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}

#[test]
fn zero_counts_write_an_empty_manifest() {
    let sources = vec![sphere(300, 1)];
    let profile = fit_sdn_profile(&sources, "sphere", 0.03).unwrap();
    let meta = CategoryMetadata::new("sphere").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let counts = BTreeMap::from([(DefectType::Crack, 0)]);
    let m = batch_synthesize(&request(&sources, &profile, &meta, counts, dir.path())).unwrap();
    assert!(m.entries.is_empty());
    let files: Vec<_> = fs::read_dir(dir.path().join("sphere")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("manifest.json")]);
    let back = CorpusManifest::load(&dir.path().join("sphere").join("manifest.json")).unwrap();
    assert!(back.entries.is_empty());
}
