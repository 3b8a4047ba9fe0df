use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use isac_track_core::config::calibrate_ref_path_gain;
use isac_track_core::diagnostics::{dense_grad_check, gru_grad_check, small_model_config, tracknet_grad_check};
use isac_track_core::nn::{Activation, GradCheckOptions, GradCheckReport};
use isac_track_core::seed::{self, Stream};
use isac_track_core::tracknet::{ModelConfig, OracleKf, SeqMode, TrackMode, TrackNetModel};
use isac_track_core::train::{
    run_stage, validation_report, EpochRecord, PreparedSplit, StageOptions, ValidationReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::RunConfig;
use crate::dataset::{episode_counts, generate, read_dataset, write_dataset};
use crate::error::CliError;
use crate::tracks::{
    episode_file, episode_setup, evaluate_rows, read_rows, straight_slots, track_one, write_rows, EpisodeSummary,
    EvalSummary,
};

#[derive(Debug, Parser)]
#[command(name = "isac-track", version, about = "Extended-target tracking from ISAC echoes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate episodes and write a dataset directory.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Whole episodes per split instead of the configured sample counts.
        #[arg(long)]
        episodes: Option<usize>,
        /// Use the 8192/2048/1024 split sizes.
        #[arg(long)]
        full_scale: bool,
    },
    /// Run one curriculum stage; stage k > 1 resumes from `stage<k-1>.ckpt` in the run directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        stage: u8,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Track test episodes in closed loop and write one record file per episode.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, required_unless_present = "oracle_kf")]
        checkpoint: Option<PathBuf>,
        /// Ground-truth measurements filtered by a classical Kalman filter.
        #[arg(long)]
        oracle_kf: bool,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
    },
    /// Compute metrics from track records, or validation checks from a run directory.
    Eval {
        #[arg(long, conflicts_with = "run", required_unless_present = "run")]
        tracks: Option<PathBuf>,
        #[arg(long, requires = "data")]
        run: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks of layers, cells and the unrolled network.
    GradCheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Also check the full-size network on every n-th parameter.
        #[arg(long)]
        full_stride: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the reference path gain and store it in the configuration file.
    CalibrateP0 {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Resolved configuration and seed echoed next to every output.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig, extra: Option<serde_json::Value>) -> anyhow::Result<()> {
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        extra,
    };
    fs::write(path, serde_json::to_vec_pretty(&m)?).with_context(|| format!("writing {}", path.display()))
}

fn resolve(common: &Common, fallback: Option<RunConfig>) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, fallback) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(c)) => c,
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData {
            common,
            out,
            episodes,
            full_scale,
        } => {
            let mut cfg = resolve(common, None)?;
            if *full_scale {
                cfg.train = cfg.train.clone().full_scale();
            }
            if *episodes == Some(0) {
                return Err(CliError::Usage("--episodes must be at least 1".into()));
            }
            let ds = generate(&cfg, *episodes).context("gen-data")?;
            let m = write_dataset(out, &cfg, &ds, episode_counts(&cfg, *episodes)).context("gen-data")?;
            println!(
                "dataset {}: {} / {} / {} samples",
                out.display(),
                m.train.samples,
                m.val.samples,
                m.test.samples
            );
            Ok(())
        }
        Command::Train {
            common,
            stage,
            data,
            run,
            max_epochs,
            patience,
            batch_size,
            lr,
        } => train(
            common,
            *stage,
            data,
            run,
            StageOptions {
                max_epochs: *max_epochs,
                patience: *patience,
                batch_size: *batch_size,
                learning_rate: *lr,
            },
        ),
        Command::Track {
            common,
            out,
            checkpoint,
            oracle_kf,
            episodes,
        } => track(common, out, checkpoint.as_deref(), *oracle_kf, *episodes),
        Command::Eval { tracks, run, data, out } => match (tracks, run, data) {
            (Some(t), _, _) => eval_tracks(t, out),
            (None, Some(r), Some(d)) => eval_run(r, d, out),
            _ => Err(CliError::Usage("eval needs --tracks, or --run with --data".into())),
        },
        Command::GradCheck {
            seeds,
            full_stride,
            out,
        } => grad_check_cmd(*seeds, *full_stride, out.as_deref()),
        Command::CalibrateP0 { config } => {
            let mut cfg = if config.exists() {
                RunConfig::load(config)?
            } else {
                RunConfig::default()
            };
            cfg.system.ref_path_gain = calibrate_ref_path_gain(&cfg.system);
            cfg.validate()?;
            cfg.save(config).context("calibrate-p0")?;
            println!("system.ref_path_gain = {}", cfg.system.ref_path_gain);
            Ok(())
        }
    }
}

pub fn stage_checkpoint(run: &Path, stage: u8) -> PathBuf {
    run.join(format!("stage{stage}.ckpt"))
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
}

fn train(common: &Common, stage: u8, data: &Path, run: &Path, opts: StageOptions) -> Result<(), CliError> {
    let (manifest, ds) = read_dataset(data).context("train: loading dataset")?;
    let cfg = resolve(common, Some(manifest.config.clone()))?;
    let mut model = if stage == 1 {
        let mut rng = seed::rng(cfg.seed, Stream::ModelInit, 0);
        TrackNetModel::init(cfg.model_config(), ds.norm, cfg.system.slot_interval_s, &mut rng)?
    } else {
        let prev = stage_checkpoint(run, stage - 1);
        if !prev.exists() {
            return Err(anyhow!(isac_track_core::error::Error::Prerequisite(format!(
                "stage {stage} needs the stage {} checkpoint {}",
                stage - 1,
                prev.display()
            )))
            .context("train")
            .into());
        }
        read_checkpoint(&prev).context("train")?.1
    };
    let want: ModelConfig = cfg.model_config();
    if model.config != want {
        return Err(CliError::Usage(
            "train: model section of the configuration differs from the checkpoint".into(),
        ));
    }
    let train_p = PreparedSplit::new(&ds.train, &model.norm).context("train")?;
    let val_p = PreparedSplit::new(&ds.val, &model.norm).context("train")?;
    let mut log = |r: &EpochRecord| {
        eprintln!(
            "stage {} epoch {} ({:?}) train {:.6e} val {:.6e}",
            r.stage, r.epoch, r.module, r.train_loss, r.val_loss
        )
    };
    let report = run_stage(
        &mut model,
        stage,
        &train_p,
        &val_p,
        &cfg.train,
        &opts,
        cfg.seed,
        Some(&mut log),
    )
    .with_context(|| format!("train: stage {stage}"))?;
    fs::create_dir_all(run).with_context(|| format!("creating {}", run.display()))?;
    write_checkpoint(&stage_checkpoint(run, stage), &model, &cfg)?;
    let rows: Vec<LossRow> = report
        .epochs
        .iter()
        .map(|e| LossRow {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
        })
        .collect();
    write_rows(&run.join(format!("loss_stage{stage}.csv")), &rows)?;
    write_manifest(
        &run.join(format!("run_manifest_stage{stage}.json")),
        "train",
        &cfg,
        Some(serde_json::json!({
            "stage": stage,
            "options": opts,
            "dataset_train_sha256": manifest.train.sha256,
            "epochs": report.epochs.len(),
            "best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "initial_val_loss": report.initial_val_loss,
            "stopped_early": report.stopped_early,
        })),
    )?;
    println!(
        "stage {stage}: {} epochs, best validation loss {:.6e} at epoch {} (initial {:.6e})",
        report.epochs.len(),
        report.best_val_loss,
        report.best_epoch,
        report.initial_val_loss
    );
    Ok(())
}

fn track(common: &Common, out: &Path, ckpt: Option<&Path>, oracle: bool, episodes: usize) -> Result<(), CliError> {
    let loaded = ckpt.map(read_checkpoint).transpose().context("track")?;
    let cfg = resolve(common, loaded.as_ref().map(|(h, _)| h.run_config.clone()))?;
    let mode = if oracle {
        TrackMode::Oracle(OracleKf::tight())
    } else {
        TrackMode::Network
    };
    let model = if oracle { None } else { loaded.as_ref().map(|(_, m)| m) };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ids: Vec<u64> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| -> anyhow::Result<u64> {
            let setup = episode_setup(&cfg, i)?;
            let rows = track_one(&cfg, &setup, model, &mode)?;
            write_rows(&episode_file(out, setup.id), &rows)?;
            Ok(setup.id)
        })
        .collect::<anyhow::Result<_>>()
        .context("track")?;
    write_manifest(
        &out.join("track_manifest.json"),
        "track",
        &cfg,
        Some(serde_json::json!({
            "mode": if oracle { "oracle-kf" } else { "network" },
            "episodes": ids,
            "checkpoint_stage": loaded.as_ref().map(|(h, _)| h.completed_stage),
        })),
    )?;
    println!("tracked {} episodes into {}", ids.len(), out.display());
    Ok(())
}

fn eval_tracks(dir: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read(dir.join("track_manifest.json")).context("eval: reading track manifest")?;
    let manifest: RunManifest = serde_json::from_slice(&text).context("eval: parsing track manifest")?;
    let extra = manifest.extra.unwrap_or_default();
    let mode = extra["mode"].as_str().unwrap_or("unknown").to_string();
    let ids: Vec<u64> = serde_json::from_value(extra["episodes"].clone()).context("eval: episode list")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut all = Vec::new();
    let mut straight = Vec::new();
    let mut episodes = Vec::new();
    for id in ids {
        let rows = read_rows(&episode_file(dir, id)).context("eval")?;
        let rec = evaluate_rows(&rows).with_context(|| format!("eval: episode {id}"))?;
        write_rows(&out.join(format!("metrics_episode_{id}.csv")), &rec.slots)?;
        let st: Vec<_> = straight_slots(&rows, &rec).copied().collect();
        episodes.push(EpisodeSummary {
            episode: id,
            all: rec.summary,
            straight: isac_track_core::metrics::Aggregates::over(&st),
        });
        all.extend(rec.slots);
        straight.extend(st);
    }
    let summary = EvalSummary {
        mode,
        episodes,
        all: isac_track_core::metrics::Aggregates::over(&all),
        straight: isac_track_core::metrics::Aggregates::over(&straight),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "position RMSE {:.4} m (straight legs {:.4} m), mean IoU {:.4}",
        summary.all.pos_rmse, summary.straight.pos_rmse, summary.all.mean_iou
    );
    Ok(())
}

/// Pass/fail of the validation comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationChecks {
    pub stage2: ValidationReport,
    pub final_stage: u8,
    pub last: ValidationReport,
    pub denoiser_beats_raw: bool,
    pub encoder_gain_over_static: f64,
    pub encoder_beats_static_2x: bool,
    pub filter_does_not_hurt: bool,
    pub iou_margin: f64,
    pub iou_beats_square: bool,
}

pub fn validation_checks(run: &Path, data: &Path) -> anyhow::Result<ValidationChecks> {
    let (manifest, ds) = read_dataset(data)?;
    let final_stage = (2..=4u8)
        .rev()
        .find(|s| stage_checkpoint(run, *s).exists())
        .ok_or_else(|| anyhow!("no stage 2 to 4 checkpoint in {}", run.display()))?;
    let report = |stage: u8| -> anyhow::Result<ValidationReport> {
        let (_, model) = read_checkpoint(&stage_checkpoint(run, stage))?;
        let p = PreparedSplit::new(&ds.val, &model.norm)?;
        Ok(validation_report(
            &model,
            &ds.val,
            &p,
            manifest.config.train.alpha,
            manifest.config.train.batch_size,
        )?)
    };
    let stage2 = report(2)?;
    let last = report(final_stage)?;
    Ok(ValidationChecks {
        // The Denoiser is trained in stage 1 and frozen through stage 2.
        denoiser_beats_raw: stage2.denoiser_beats_raw(),
        encoder_gain_over_static: stage2.encoder_gain_over_static(),
        encoder_beats_static_2x: stage2.encoder_gain_over_static() >= 2.0,
        // Both closed loop: stage-2 Encoder with the untrained filter against
        // the trained filter of the final stage.
        filter_does_not_hurt: last.filtered_pos_rmse <= stage2.instantaneous_pos_rmse,
        iou_margin: last.iou_margin(),
        iou_beats_square: last.iou_margin() >= 0.1,
        stage2,
        final_stage,
        last,
    })
}

fn eval_run(run: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let checks = validation_checks(run, data).context("eval")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("validation.json"), &checks)?;
    println!(
        "denoiser beats raw: {}; encoder gain over static {:.2}x; filter does not hurt: {}; IoU margin {:.3}",
        checks.denoiser_beats_raw, checks.encoder_gain_over_static, checks.filter_does_not_hurt, checks.iou_margin
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckLine {
    target: String,
    seed: u64,
    report: GradCheckReport,
}

/// Every check of the `grad-check` command.
pub fn grad_check_suite(seeds: u64, full_stride: Option<usize>) -> anyhow::Result<Vec<(String, u64, GradCheckReport)>> {
    let opts = GradCheckOptions::default();
    let small = small_model_config();
    let mut out = Vec::new();
    for seed in 0..seeds {
        for (name, act) in [("dense relu", Activation::Relu), ("dense linear", Activation::Linear)] {
            out.push((name.to_string(), seed, dense_grad_check(seed, act, &opts)?));
        }
        out.push(("gru 5 steps".into(), seed, gru_grad_check(seed, 5, &opts)?));
        for (name, mode, cached) in [
            ("tracknet denoise", SeqMode::Denoise, false),
            ("tracknet teacher", SeqMode::Teacher, true),
            ("tracknet closed loop", SeqMode::Closed, false),
        ] {
            out.push((
                name.into(),
                seed,
                tracknet_grad_check(&small, seed, mode, cached, 5, &opts)?,
            ));
        }
    }
    if let Some(stride) = full_stride {
        let sampled = GradCheckOptions { stride, ..opts };
        out.push((
            "tracknet full size closed loop".into(),
            0,
            tracknet_grad_check(&ModelConfig::default(), 0, SeqMode::Closed, false, 5, &sampled)?,
        ));
    }
    Ok(out)
}

fn grad_check_cmd(seeds: u64, full_stride: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let lines = grad_check_suite(seeds, full_stride).context("grad-check")?;
    let mut ok = true;
    for (name, seed, r) in &lines {
        ok &= r.passed;
        println!(
            "{} {name} seed {seed}: max rel error {:.3e} (analytic {:.6e}, numeric {:.6e}) over {} parameters ({} skipped at relu kinks)",
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.worst_analytic,
            r.worst_numeric,
            r.checked,
            r.skipped_kinks
        );
    }
    if let Some(path) = out {
        let rows: Vec<CheckLine> = lines
            .into_iter()
            .map(|(target, seed, report)| CheckLine { target, seed, report })
            .collect();
        write_json(path, &rows)?;
    }
    if ok {
        Ok(())
    } else {
        Err(anyhow!("grad-check: at least one check exceeded its tolerance").into())
    }
}
