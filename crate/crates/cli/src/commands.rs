//! Thin wrappers over the core and service crates. Every file a command
//! writes lands in its own run directory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radscan_core::cam::localize;
use radscan_core::dataset::{load_image, preprocess, read_manifest_csv, scan_dataset, summarize, Manifest, Mode, PreprocessConfig, Split};
use radscan_core::metrics::{compare_report, evaluate, EvalOptions, EvalReport};
use radscan_core::modelzoo::{build_model, list_backbones, load_checkpoint, CheckpointMeta, ModelHandle};
use radscan_core::training::train;
use radscan_service::{score_manifest, serve, AppState, ServiceConfig, Store};

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const STORE_FILE: &str = "worklist.sqlite";

/// Create `<out>/<UTC timestamp>-<config hash>` and snapshot the config into it.
pub fn create_run_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", config.short_hash());
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::Input(format!("{}: {e}", config.out.display())))?;
    let mut dir = config.out.join(&base);
    let mut n = 1;
    // two invocations in the same second with the same config
    while dir.exists() {
        n += 1;
        dir = config.out.join(format!("{base}-{n}"));
    }
    std::fs::create_dir(&dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    write_text(&dir.join(CONFIG_FILE), &config.to_json())?;
    Ok(dir)
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("report serializes"))
}

fn eval_options(config: &RunConfig, preprocess: &PreprocessConfig) -> EvalOptions {
    EvalOptions {
        preprocess: PreprocessConfig {
            augment: false,
            ..preprocess.clone()
        },
        batch_size: config.batch_size,
        workers: config.workers,
    }
}

fn load(checkpoint: &Path) -> Result<(ModelHandle, CheckpointMeta), CliError> {
    Ok(load_checkpoint(checkpoint)?)
}

fn with_model_details(mut report: EvalReport, model: &ModelHandle) -> EvalReport {
    report.backbone = Some(model.backbone());
    report.parameter_count = Some(model.parameter_count());
    report
}

pub fn cmd_scan(config: &RunConfig, all: bool) -> Result<String, CliError> {
    let splits = if all { vec![Split::Train, Split::Valid] } else { vec![config.split] };
    let mut out = String::new();
    for split in splits {
        let manifest = scan_dataset(&config.root, split)?;
        for d in &manifest.diagnostics {
            log::warn!("{d:?}");
        }
        out.push_str(&summarize(&manifest).to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Train, then evaluate the best checkpoint on the validation split.
pub fn cmd_train(config: &RunConfig) -> Result<(PathBuf, EvalReport), CliError> {
    let train_set = scan_dataset(&config.root, Split::Train)?;
    let valid_set = scan_dataset(&config.root, Split::Valid)?;
    let model = build_model(&config.model_config())?;
    let dir = create_run_dir(config)?;
    log::info!("run directory {}", dir.display());
    let result = train(&model, &train_set, &valid_set, &config.train_config(), &dir)?;
    let (best, meta) = load(&result.best_checkpoint)?;
    let options = eval_options(config, &meta.preprocess);
    let mut report = evaluate(&best, &valid_set, config.level, Some(config.threshold), &options)?;
    report.training_seconds = Some(result.total_seconds);
    let report = with_model_details(report, &best);
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok((dir, report))
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<(PathBuf, EvalReport), CliError> {
    let (model, meta) = load(checkpoint)?;
    let manifest = scan_dataset(&config.root, config.split)?;
    let options = eval_options(config, &meta.preprocess);
    let report = evaluate(&model, &manifest, config.level, Some(config.threshold), &options)?;
    let report = with_model_details(report, &model);
    let dir = create_run_dir(config)?;
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok((dir, report))
}

pub fn cmd_compare(config: &RunConfig, reports: &[PathBuf]) -> Result<(PathBuf, String), CliError> {
    let parsed = reports
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<EvalReport>(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = compare_report(&parsed)?;
    let dir = create_run_dir(config)?;
    comparison.write(&dir)?;
    Ok((dir, comparison.markdown))
}

/// One `(path, probability)` per image.
pub fn cmd_predict(checkpoint: &Path, images: &[PathBuf]) -> Result<Vec<(PathBuf, f64)>, CliError> {
    let (model, meta) = load(checkpoint)?;
    let config = PreprocessConfig {
        augment: false,
        ..meta.preprocess
    };
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    images
        .iter()
        .map(|path| {
            let input = preprocess(&load_image(path)?, &config, Mode::Eval, &mut rng)?;
            let prediction = model.forward(std::slice::from_ref(&input), false)?;
            Ok((path.clone(), prediction.probabilities[0] as f64))
        })
        .collect()
}

pub struct CamOutcome {
    pub image: PathBuf,
    pub probability: f64,
    /// Overlay written, if the image was called abnormal.
    pub overlay: Option<PathBuf>,
}

pub fn cmd_cam(config: &RunConfig, checkpoint: &Path, images: &[PathBuf]) -> Result<(PathBuf, Vec<CamOutcome>), CliError> {
    let (model, meta) = load(checkpoint)?;
    let preprocess = PreprocessConfig {
        augment: false,
        ..meta.preprocess
    };
    let raw: Vec<_> = images.iter().map(|p| load_image(p)).collect::<Result<_, _>>()?;
    let dir = create_run_dir(config)?;
    let mut outcomes = Vec::new();
    for (k, (path, image)) in images.iter().zip(&raw).enumerate() {
        let found = localize(&model, image, &preprocess, config.threshold, config.alpha)?;
        let overlay = match (found.overlay, found.sidecar) {
            (Some(overlay), Some(sidecar)) => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
                let png = dir.join(format!("{k}-{stem}-cam.png"));
                overlay.save_png(&png)?;
                write_json(&png.with_extension("json"), &sidecar)?;
                Some(png)
            }
            _ => None,
        };
        outcomes.push(CamOutcome {
            image: path.clone(),
            probability: found.probability,
            overlay,
        });
    }
    Ok((dir, outcomes))
}

/// Score the manifest into a fresh worklist store and build the service state.
pub fn prepare_service(
    config: &RunConfig,
    checkpoint: &Path,
    manifest_csv: Option<&Path>,
) -> Result<(PathBuf, AppState, radscan_service::ScoreSummary), CliError> {
    let (model, meta) = load(checkpoint)?;
    let manifest: Manifest = match manifest_csv {
        Some(csv) => read_manifest_csv(csv, config.split, &config.root)?,
        None => scan_dataset(&config.root, config.split)?,
    };
    let dir = create_run_dir(config)?;
    let store = Arc::new(Store::open(&dir.join(STORE_FILE))?);
    let service_config = ServiceConfig {
        threshold: config.threshold,
        alpha: config.alpha,
        preprocess: PreprocessConfig {
            augment: false,
            ..meta.preprocess
        },
        cache_dir: dir.join("overlays"),
    };
    let summary = score_manifest(&store, &model, &manifest, &service_config.preprocess, config.threshold)?;
    let state = AppState::new(store, Arc::new(model), service_config);
    Ok((dir, state, summary))
}

pub fn cmd_serve(state: AppState, host: &str, port: u16) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Config(format!("bad listen address {host}:{port}: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("serving on http://{addr}");
    runtime
        .block_on(serve(state, addr))
        .map_err(|e| CliError::Runtime(format!("server on {addr} stopped: {e}")))
}

pub fn backbones() -> String {
    let mut out = format!("{:<18} {:<18} {:>8}\n", "id", "name", "params");
    for info in list_backbones() {
        out.push_str(&format!("{:<18} {:<18} {:>7.1}M\n", info.id, info.display_name, info.nominal_params_millions));
    }
    out
}
