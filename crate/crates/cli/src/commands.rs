use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use defectforge_core::detector::evaluate::save_overlay;
use defectforge_core::detector::{evaluate, fit_bank, EvalConfig, PrototypeBank, TestSample};
use defectforge_core::geometry::io::{load_annotated, save_cloud};
use defectforge_core::geometry::CloudFormat;
use defectforge_core::instruction::{
    execute, mllm_generate, parse_instruction, resolve, validate, CategoryMetadata, EndpointConfig, Source,
    SynthesisInstruction,
};
use defectforge_core::pipeline::batch::{corpus_dir, EntryStatus, MANIFEST_FILE};
use defectforge_core::pipeline::{batch_synthesize, fit_sdn_profile, BatchRequest, SdnProfile};
use defectforge_core::{AnomalyMask, PointCloud};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_OK};
use crate::ServeArgs;

fn emit(stdout: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(stdout, "{line}").map_err(|e| CliError::io("cannot write stdout", e))
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

fn is_mask_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.to_ascii_lowercase().ends_with(".mask.ply"))
}

fn is_cloud_file(path: &Path) -> bool {
    path.is_file() && CloudFormat::from_path(path).is_some() && !is_mask_file(path)
}

/// Cloud files directly inside `dir`, sorted by name.
fn list_clouds(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::io(format!("cannot read directory {}", dir.display()), e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| CliError::io(format!("cannot read directory {}", dir.display()), e))?.path();
        if is_cloud_file(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Cloud files anywhere below `dir`, sorted by path.
fn scan_clouds(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let rd = fs::read_dir(&d).map_err(|e| CliError::io(format!("cannot read directory {}", d.display()), e))?;
        for entry in rd {
            let path = entry.map_err(|e| CliError::io(format!("cannot read directory {}", d.display()), e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_cloud_file(&path) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_any(path: &Path) -> Result<defectforge_core::geometry::io::LoadedCloud, CliError> {
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| CliError::invalid("format", format!("unrecognized cloud extension: {}", path.display())))?;
    Ok(load_annotated(path, format)?)
}

fn load_dir(dir: &Path, what: &str) -> Result<Vec<PointCloud>, CliError> {
    let files = list_clouds(dir)?;
    if files.is_empty() {
        return Err(CliError::invalid("empty_input", format!("{what} directory {} holds no clouds", dir.display())));
    }
    files.iter().map(|p| Ok(load_any(p)?.cloud)).collect()
}

fn metadata(cfg: &RunConfig) -> Result<CategoryMetadata, CliError> {
    match &cfg.paths.metadata {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("cannot read {}", p.display()), e))?;
            let meta: CategoryMetadata =
                serde_json::from_str(&text).map_err(|e| CliError::invalid("metadata", e.to_string()))?;
            if meta.category != cfg.category {
                return Err(CliError::invalid(
                    "metadata",
                    format!("metadata names category {}, config names {}", meta.category, cfg.category),
                ));
            }
            Ok(meta)
        }
        None => Ok(CategoryMetadata::new(cfg.category.clone())?),
    }
}

fn endpoint() -> Result<EndpointConfig, CliError> {
    EndpointConfig::from_env().ok_or_else(|| CliError::invalid("config", "model use requested but DEFECTFORGE_LLM_URL is not set"))
}

pub fn cmd_synth(a: &crate::SynthArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = load_any(&a.input)?;
    let cloud = loaded.cloud;
    let profile = match &a.profile {
        Some(p) => SdnProfile::load(p)?,
        None => fit_sdn_profile(std::slice::from_ref(&cloud), "input", defectforge_core::pipeline::sdn::DEFAULT_VOXEL_SIZE)?,
    };
    let (instr, source): (SynthesisInstruction, Source) = match (&a.instruction, a.defect) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
            let mut instr = parse_instruction(&text)?;
            if let Some(s) = a.seed {
                instr.seed = s;
            }
            let report = validate(&instr, &cloud, &profile);
            if !report.valid {
                return Err(CliError::invalid("invalid_instruction", report.summary())
                    .with_detail(serde_json::to_value(&report).expect("report serializes")));
            }
            (instr, Source::Direct)
        }
        (None, Some(u)) => {
            let seed = a.seed.expect("clap requires --seed with --type");
            let meta = CategoryMetadata::new(profile.category.clone())?;
            let candidate = if a.use_model {
                match mllm_generate(&meta, u, &endpoint()?) {
                    Ok(text) => Some(text),
                    Err(e) => {
                        log::warn!("model endpoint unavailable, using rule template: {e}");
                        None
                    }
                }
            } else {
                None
            };
            let r = resolve(candidate.as_deref(), u, &cloud, &meta, &profile, seed);
            (r.instruction, r.source)
        }
        (None, None) => unreachable!("clap requires --type or --instruction"),
    };
    let mut run = execute(&instr, &cloud, &profile)?;
    run.provenance.source = source;
    mkdir(&a.out)?;
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    let base = format!("{stem}_{}_{}", instr.defect, instr.seed);
    let cloud_path = a.out.join(format!("{base}.ply"));
    let mask_path = a.out.join(format!("{base}.mask.ply"));
    let prov_path = a.out.join(format!("{base}.provenance.json"));
    let mut out_cloud = run.cloud;
    out_cloud.id = base.clone();
    save_cloud(&out_cloud, None, &cloud_path)?;
    save_cloud(&out_cloud, Some(&run.mask), &mask_path)?;
    let prov = serde_json::to_string_pretty(&run.provenance).expect("provenance serializes") + "\n";
    fs::write(&prov_path, prov).map_err(|e| CliError::io(format!("cannot write {}", prov_path.display()), e))?;
    for p in [&cloud_path, &mask_path, &prov_path] {
        emit(stdout, p.display())?;
    }
    Ok(EXIT_OK)
}

/// The saved profile when `fit` has run, otherwise one fitted to the training clouds.
fn batch_profile(cfg: &RunConfig) -> Result<SdnProfile, CliError> {
    let path = cfg.profile_path();
    if path.is_file() {
        let p = SdnProfile::load(&path)?;
        if p.category != cfg.category {
            return Err(CliError::invalid(
                "profile",
                format!("{} belongs to category {}", path.display(), p.category),
            ));
        }
        return Ok(p);
    }
    let train = load_dir(&cfg.paths.train, "train")?;
    Ok(fit_sdn_profile(&train, &cfg.category, cfg.sdn.voxel_size)?)
}

pub fn cmd_batch(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let sources = load_dir(cfg.sources(), "sources")?;
    let profile = batch_profile(cfg)?;
    let meta = metadata(cfg)?;
    let endpoint = if cfg.synthesis.use_model { Some(endpoint()?) } else { None };
    let augment = Some(cfg.synthesis.augment).filter(|a| a.any_enabled());
    let manifest = batch_synthesize(&BatchRequest {
        sources: &sources,
        profile: &profile,
        counts: cfg.synthesis.counts.clone(),
        augment,
        meta: &meta,
        seed: cfg.seed(),
        out_dir: &cfg.paths.out,
        endpoint,
    })?;
    let path = corpus_dir(&cfg.paths.out, &cfg.category).join(MANIFEST_FILE);
    emit(stdout, path.display())?;
    let skipped: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.status == EntryStatus::Skipped)
        .map(|e| json!({"entry": e.entry_id, "error": e.error}))
        .collect();
    if skipped.is_empty() {
        return Ok(EXIT_OK);
    }
    Err(CliError::invalid(
        "partial_failure",
        format!("{} of {} entries skipped", skipped.len(), manifest.entries.len()),
    )
    .with_detail(json!({"manifest": path, "skipped": skipped})))
}

pub fn cmd_fit(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let train = load_dir(&cfg.paths.train, "train")?;
    let profile = fit_sdn_profile(&train, &cfg.category, cfg.sdn.voxel_size)?;
    let bank = fit_bank(&train, &profile, cfg.detector.k_feat, cfg.detector.bank_size)?;
    mkdir(&cfg.paths.out)?;
    let (pp, bp) = (cfg.profile_path(), cfg.bank_path());
    profile.save(&pp)?;
    bank.save(&bp)?;
    emit(stdout, pp.display())?;
    emit(stdout, bp.display())?;
    Ok(EXIT_OK)
}

/// The sibling `<stem>.mask.ply` mask, else an `anomaly` column in the
/// cloud file itself, else all-normal.
fn test_sample(path: &Path, root: &Path) -> Result<TestSample, CliError> {
    let loaded = load_any(path)?;
    let mut cloud = loaded.cloud;
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    cloud.id = rel.to_string_lossy().replace('\\', "/");
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let sibling = path.with_file_name(format!("{stem}.mask.ply"));
    let mask = if sibling.is_file() {
        let m = load_annotated(&sibling, CloudFormat::PlyAscii)?;
        let mask = m.mask.ok_or_else(|| {
            CliError::invalid("mask", format!("{} has no anomaly column", sibling.display()))
        })?;
        if mask.len() != cloud.len() {
            return Err(CliError::invalid(
                "mask",
                format!("{} has {} rows, cloud has {}", sibling.display(), mask.len(), cloud.len()),
            ));
        }
        mask
    } else {
        loaded.mask.unwrap_or_else(|| AnomalyMask::empty(cloud.len()))
    };
    Ok(TestSample {
        anomalous: mask.count() > 0,
        cloud,
        mask,
    })
}

pub fn cmd_eval(
    cfg: &RunConfig,
    bank_path: &Path,
    profile_path: &Path,
    threads: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let bank = PrototypeBank::load(bank_path)?;
    let profile = SdnProfile::load(profile_path)?;
    let files = scan_clouds(&cfg.paths.test)?;
    if files.is_empty() {
        return Err(CliError::invalid(
            "empty_input",
            format!("test directory {} holds no clouds", cfg.paths.test.display()),
        ));
    }
    let samples = files
        .iter()
        .map(|p| test_sample(p, &cfg.paths.test))
        .collect::<Result<Vec<_>, _>>()?;
    if threads == Some(0) {
        return Err(CliError::invalid("usage", "--threads must be at least 1"));
    }
    let eval_cfg = EvalConfig {
        k_agg: cfg.detector.k_agg,
        threads,
    };
    let ev = evaluate(&samples, &bank, &profile, &eval_cfg)?;
    let overlays = cfg.paths.out.join("overlays");
    for (s, r) in samples.iter().zip(&ev.scores) {
        let path = overlays.join(format!("{}.ply", s.cloud.id));
        mkdir(path.parent().expect("overlay path has a parent"))?;
        save_overlay(&s.cloud, &r.point_scores, &s.mask, &path)?;
    }
    let metrics_path = cfg.paths.out.join("metrics.json");
    let text = serde_json::to_string_pretty(&ev.metrics).expect("metrics serialize") + "\n";
    fs::write(&metrics_path, text).map_err(|e| CliError::io(format!("cannot write {}", metrics_path.display()), e))?;
    emit(
        stdout,
        json!({"metrics": metrics_path, "o_roc": ev.metrics.o_roc, "p_roc": ev.metrics.p_roc}),
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_serve(a: &ServeArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let state = defectforge_studio::app_state(defectforge_studio::StudioConfig {
        data_dir: a.data_dir.clone(),
        upload_limit: a.upload_limit,
        preview_budget: a.preview_budget.max(1),
        cors_origin: a.cors_origin.clone(),
        ..Default::default()
    })?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("cannot start async runtime", e))?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::io(format!("cannot bind {addr}"), e))?;
        let local = listener.local_addr().map_err(|e| CliError::io("cannot read bound address", e))?;
        emit(stdout, json!({"listening": format!("http://{local}")}))?;
        stdout.flush().map_err(|e| CliError::io("cannot write stdout", e))?;
        defectforge_studio::serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| CliError::io("server failed", e))
    })?;
    Ok(EXIT_OK)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = term.recv() => {}
                    _ = ctrl_c => {}
                }
            }
            Err(_) => ctrl_c.await,
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

