//! Implementations of the experiment subcommands.
//!
//! Every command is deterministic given `(config, seed)`: all randomness
//! derives from the master seed through named streams, the seed is recorded
//! in every output file, and outputs are write-once unless `--force`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cocoon_core::artifact::{ArtifactError, CalibrationArtifact};
use cocoon_core::coverage::{
    coverage_report, generate_dataset, run_coverage_trials, TrialResult,
};
use cocoon_core::rng::derive_seed;
use cocoon_core::sim::{
    calibrate_scene_pools, corrupt, generate_scene, run_pipeline, sweep_optimal_region,
    sweep_to_csv, train_head, train_scene_aligner, Corruption, FusionMode, PipelineConfig,
    SceneSpec, SimResult, SWEEP_MARGIN_PP,
};

use crate::config::RunConfig;
use crate::csv_data::{load_dataset_csv, resolve_dataset_path};

/// Command failure with its process exit code: 3 for configuration/input
/// problems, 4 for artifact version mismatches, 1 for runtime errors.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 3,
        }
    }

    pub fn version(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 4,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::input(e.0)
    }
}

impl From<crate::csv_data::CsvError> for CliError {
    fn from(e: crate::csv_data::CsvError) -> Self {
        CliError::input(e.0)
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::runtime(e.to_string())
}

/// Loads an artifact, mapping missing files to exit 3 and version mismatches
/// to exit 4.
pub fn load_artifact(path: &Path) -> Result<CalibrationArtifact, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!(
            "missing artifact {}: run train-aligner first",
            path.display()
        )));
    }
    CalibrationArtifact::load(path).map_err(|e| match e {
        ArtifactError::VersionMismatch { .. } => CliError::version(e.to_string()),
        other => CliError::input(other.to_string()),
    })
}

/// Write-once output: refuses to overwrite existing files unless forced.
pub fn write_output(path: &Path, content: &str, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::input(format!(
            "refusing to overwrite {} (pass --force)",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn parse_corruption(config: &RunConfig, kind: &str) -> Result<Corruption, CliError> {
    let severity = config.corruption_severity(kind)?;
    Corruption::parse(kind, severity).ok_or_else(|| {
        CliError::input(format!(
            "unknown corruption `{kind}` (expected none, blackout_a, noise_a, noise_b, dropout_b, misalign)"
        ))
    })
}

pub fn cmd_train_aligner(
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let spec = config.scene_spec()?;
    let cfg = config.sim_train_config()?;
    let (aligner, fis, trace) = train_scene_aligner(&spec, &cfg, seed).map_err(runtime)?;
    let final_loss = trace.last().map_or(f64::NAN, |l| l.total);
    let artifact =
        CalibrationArtifact::new(aligner, fis, Vec::new(), config.snapshot(), seed);
    write_output(out, &artifact.to_json(), force)?;
    println!(
        "train-aligner: {} impressions in {}-d aligned space, {} steps, final loss {final_loss:.6}; wrote {}",
        artifact.fis.num_classes(),
        artifact.fis.dim(),
        trace.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_calibrate(
    artifact_path: &Path,
    config_path: Option<&Path>,
    seed: u64,
    out: Option<&Path>,
    force: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let spec = config.scene_spec()?;
    let mut artifact = load_artifact(artifact_path)?;
    if artifact.aligner.input_dim() != spec.feature_dim {
        return Err(CliError::input(format!(
            "artifact aligner expects {}-d features but sim.feature_dim is {}",
            artifact.aligner.input_dim(),
            spec.feature_dim
        )));
    }
    let calib_scenes = config.get_usize("aligner.calib_scenes")?;
    let pools = calibrate_scene_pools(&spec, &artifact.aligner, &artifact.fis, calib_scenes, seed)
        .map_err(runtime)?;
    let pool_sizes: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    artifact.nc_pools = pools;
    artifact
        .config
        .insert("calibrate.seed".to_string(), seed.to_string());
    let target = out.unwrap_or(artifact_path);
    write_output(target, &artifact.to_json(), force || out.is_none())?;
    println!(
        "calibrate: {} layers, pool sizes {:?}; wrote {}",
        pool_sizes.len(),
        pool_sizes,
        target.display()
    );
    Ok(())
}

/// Per-trial rows saved by `coverage` and re-aggregated by `report`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrialsFile {
    pub alpha: f64,
    pub master_seed: u64,
    pub trials: Vec<TrialResult>,
}

pub fn cmd_coverage(
    config_path: Option<&Path>,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
    force: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let alpha = config.get_f64("coverage.alpha")?;
    let n_seeds = config.get_usize("coverage.seeds")?;
    let dataset = match config.dataset()? {
        Some(kind) => generate_dataset(
            kind,
            config.get_usize("coverage.n")?,
            config.get_usize("coverage.dim")?,
            seed,
        ),
        None => {
            let raw = PathBuf::from(config.get("coverage.csv_path"));
            if raw.as_os_str().is_empty() {
                return Err(CliError::input(
                    "coverage.dataset = csv requires coverage.csv_path",
                ));
            }
            let path = resolve_dataset_path(&raw);
            if !path.exists() {
                return Err(CliError::input(format!(
                    "dataset {} not found (also tried COCOON_DATA_DIR)",
                    raw.display()
                )));
            }
            load_dataset_csv(&path)?
        }
    };
    println!(
        "coverage: dataset {} rows x {} features, alpha {alpha}, {n_seeds} seeds",
        dataset.len(),
        dataset.dim()
    );
    let trial_cfg = config.trial_config()?;
    let trials =
        run_coverage_trials(&dataset, alpha, n_seeds, seed, &trial_cfg, jobs).map_err(runtime)?;
    let report = coverage_report(&trials, alpha, seed).map_err(runtime)?;

    let trials_file = TrialsFile {
        alpha,
        master_seed: seed,
        trials,
    };
    write_output(
        &out_dir.join("trials.json"),
        &serde_json::to_string_pretty(&trials_file).expect("trials serialize"),
        force,
    )?;
    write_output(&out_dir.join("coverage_report.json"), &report.to_json(), force)?;
    write_output(&out_dir.join("coverage_report.csv"), &report.to_csv(), force)?;
    for row in &report.rows {
        println!(
            "coverage[{}]: mean {:.2} std {:.2} abs_diff {:.2} width {:.4}",
            row.method, row.mean, row.std, row.abs_diff, row.mean_width
        );
    }
    println!("coverage: wrote {}", out_dir.join("coverage_report.json").display());
    Ok(())
}

pub fn cmd_report(trials_path: &Path, out_dir: &Path, force: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(trials_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", trials_path.display())))?;
    let trials_file: TrialsFile =
        serde_json::from_str(&text).map_err(|e| CliError::input(e.to_string()))?;
    let report = coverage_report(
        &trials_file.trials,
        trials_file.alpha,
        trials_file.master_seed,
    )
    .map_err(runtime)?;
    write_output(&out_dir.join("coverage_report.json"), &report.to_json(), force)?;
    write_output(&out_dir.join("coverage_report.csv"), &report.to_csv(), force)?;
    for row in &report.rows {
        println!(
            "report[{}]: mean {:.2} std {:.2} abs_diff {:.2} width {:.4}",
            row.method, row.mean, row.std, row.abs_diff, row.mean_width
        );
    }
    Ok(())
}

/// Shared setup for `simulate` and `sweep`: evaluation scene, corruption,
/// and the frozen head, all derived from the master seed.
fn eval_fixture(
    config: &RunConfig,
    artifact: &CalibrationArtifact,
    kind: &str,
    seed: u64,
) -> Result<(cocoon_core::sim::Scene, Corruption, cocoon_core::sim::LinearHead), CliError> {
    let spec = config.scene_spec()?;
    if artifact.aligner.input_dim() != spec.feature_dim {
        return Err(CliError::input(format!(
            "artifact aligner expects {}-d features but sim.feature_dim is {}",
            artifact.aligner.input_dim(),
            spec.feature_dim
        )));
    }
    let corruption = parse_corruption(config, kind)?;
    let eval_spec = SceneSpec {
        num_queries: config.get_usize("sim.eval_queries")?,
        ..spec.clone()
    };
    let clean = generate_scene(&eval_spec, derive_seed(seed, "eval-scene"));
    let scene = corrupt(&clean, corruption, derive_seed(seed, "corruption"));
    let head = train_head(
        &spec,
        config.get_usize("head.train_scenes")?,
        config.get_usize("head.epochs")?,
        config.get_f64("head.learning_rate")?,
        seed,
    )
    .map_err(runtime)?;
    Ok((scene, corruption, head))
}

pub fn cmd_simulate(
    artifact_path: &Path,
    kind: &str,
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let artifact = load_artifact(artifact_path)?;
    artifact
        .validate_for_inference()
        .map_err(|e| CliError::input(e.to_string()))?;
    let (scene, corruption, head) = eval_fixture(&config, &artifact, kind, seed)?;
    let base = PipelineConfig {
        mode: FusionMode::Static,
        clip_threshold: config.get_f64("clip.threshold")?,
        clip_policy: config.clip_policy()?,
    };
    let static_out = run_pipeline(&scene, &artifact, &head, &base).map_err(runtime)?;
    let adaptive_out = run_pipeline(
        &scene,
        &artifact,
        &head,
        &PipelineConfig {
            mode: FusionMode::Adaptive,
            ..base
        },
    )
    .map_err(runtime)?;
    let result = SimResult::from_runs(seed, corruption, &static_out, adaptive_out);
    write_output(out, &result.to_json(), force)?;
    println!(
        "simulate[{}]: static {:.4} adaptive {:.4} mean_w_a {:.3} clip(matched) {:.3} clip(background) {:.3}; wrote {}",
        result.corruption,
        result.static_accuracy,
        result.adaptive_accuracy,
        result.mean_weight_a,
        result.clip_rate_matched,
        result.clip_rate_background,
        out.display()
    );
    Ok(())
}

pub fn cmd_sweep(
    artifact_path: &Path,
    kind: &str,
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let artifact = load_artifact(artifact_path)?;
    artifact
        .validate_for_inference()
        .map_err(|e| CliError::input(e.to_string()))?;
    let (scene, _, head) = eval_fixture(&config, &artifact, kind, seed)?;
    let sweep = sweep_optimal_region(&scene, &head, SWEEP_MARGIN_PP).map_err(runtime)?;
    let adaptive = run_pipeline(
        &scene,
        &artifact,
        &head,
        &PipelineConfig {
            mode: FusionMode::Adaptive,
            clip_threshold: config.get_f64("clip.threshold")?,
            clip_policy: config.clip_policy()?,
        },
    )
    .map_err(runtime)?;
    write_output(out, &sweep_to_csv(&sweep, seed), force)?;
    println!(
        "sweep[{kind}]: peak {:.2}% region {:?} adaptive mean_w_a {:.3} inside {}; wrote {}",
        sweep.peak_accuracy,
        sweep.optimal_region,
        adaptive.mean_weight_a,
        sweep.region_contains(adaptive.mean_weight_a),
        out.display()
    );
    Ok(())
}
