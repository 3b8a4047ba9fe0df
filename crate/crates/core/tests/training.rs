use isac_track_core::config::{SystemConfig, TrajectoryParams};
use isac_track_core::nn::flatten;
use isac_track_core::seed::{self, Stream};
use isac_track_core::tracknet::{ModelConfig, TrackNetModel};
use isac_track_core::train::*;
use isac_track_core::Error;

struct Fixture {
    tcfg: TrainingConfig,
    train: PreparedSplit,
    val: PreparedSplit,
    model: TrackNetModel,
}

fn fixture() -> Fixture {
    fixture_seeded(21)
}

fn fixture_seeded(seed: u64) -> Fixture {
    let cfg = SystemConfig {
        n_tx: 4,
        n_rx: 4,
        n_slots: 24,
        ..SystemConfig::default()
    };
    let tcfg = TrainingConfig {
        m_train: 8,
        m_val: 4,
        m_test: 4,
        sample_len: 6,
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let ds = build_dataset(&cfg, &TrajectoryParams::default(), &PriorNoise::default(), &tcfg, seed).unwrap();
    let model = TrackNetModel::init(
        ModelConfig::for_arrays(4, 4),
        ds.norm,
        cfg.slot_interval_s,
        &mut seed::rng(seed, Stream::ModelInit, 0),
    )
    .unwrap();
    Fixture {
        train: PreparedSplit::new(&ds.train, &ds.norm).unwrap(),
        val: PreparedSplit::new(&ds.val, &ds.norm).unwrap(),
        tcfg,
        model,
    }
}

fn opts(epochs: usize) -> StageOptions {
    StageOptions {
        max_epochs: Some(epochs),
        ..StageOptions::default()
    }
}

fn run(f: &Fixture, model: &mut TrackNetModel, stage: u8, epochs: usize) -> Result<StageReport, Error> {
    run_stage(model, stage, &f.train, &f.val, &f.tcfg, &opts(epochs), 21, None)
}

#[test]
fn stages_leave_frozen_modules_bit_identical() {
    let f = fixture();
    let mut m = f.model.clone();
    let snap = |m: &TrackNetModel| (flatten(&m.denoiser), flatten(&m.encoder), flatten(&m.gain));

    let before = snap(&m);
    run(&f, &mut m, 1, 2).unwrap();
    let after = snap(&m);
    assert_ne!(before.0, after.0);
    assert_eq!(before.1, after.1);
    assert_eq!(before.2, after.2);

    let before = after;
    run(&f, &mut m, 2, 2).unwrap();
    let after = snap(&m);
    assert_eq!(before.0, after.0);
    assert_ne!(before.1, after.1);
    assert_eq!(before.2, after.2);

    let before = after;
    run(&f, &mut m, 3, 2).unwrap();
    let after = snap(&m);
    assert_eq!(before.0, after.0);
    assert_ne!(before.1, after.1);
    assert_ne!(before.2, after.2);

    let before = after;
    run(&f, &mut m, 4, 2).unwrap();
    let after = snap(&m);
    assert_ne!(before.0, after.0);
    assert_eq!(m.completed_stage, 4);
}

#[test]
fn stage_three_trains_gain_then_encoder() {
    let f = fixture();
    let mut m = f.model.clone();
    run(&f, &mut m, 1, 1).unwrap();
    run(&f, &mut m, 2, 1).unwrap();
    let r = run(&f, &mut m, 3, 4).unwrap();
    let modules: Vec<_> = r.epochs.iter().map(|e| e.module).collect();
    assert_eq!(
        modules,
        [
            TrainedModule::Gain,
            TrainedModule::Encoder,
            TrainedModule::Gain,
            TrainedModule::Encoder
        ]
    );
}

#[test]
fn stage_two_needs_stage_one() {
    let f = fixture();
    let mut m = f.model.clone();
    let before = m.clone();
    assert!(matches!(run(&f, &mut m, 2, 1), Err(Error::Prerequisite(_))));
    assert!(matches!(run(&f, &mut m, 4, 1), Err(Error::Prerequisite(_))));
    assert_eq!(m, before);
}

#[test]
fn nan_parameters_report_divergence() {
    let f = fixture();
    let mut m = f.model.clone();
    m.denoiser.dnn2.layers[0].bias[0] = f64::NAN;
    let r = run(&f, &mut m, 1, 3);
    assert!(matches!(r, Err(Error::Diverged { epoch: 0, .. })), "{r:?}");
}

/// Relative change of the training loss over the first 10 epochs of `stage`,
/// median over three seeds.
fn median_change(stage: u8) -> f64 {
    let mut changes: Vec<f64> = [3u64, 4, 5]
        .iter()
        .map(|&s| {
            let f = fixture_seeded(s);
            let mut m = f.model.clone();
            for k in 1..stage {
                run(&f, &mut m, k, 2).unwrap();
            }
            let r = run(&f, &mut m, stage, 10).unwrap();
            r.epochs[9].train_loss / r.epochs[0].train_loss - 1.0
        })
        .collect();
    changes.sort_by(f64::total_cmp);
    changes[1]
}

#[test]
fn training_loss_decreases_in_every_stage() {
    for stage in 1..=4 {
        let c = median_change(stage);
        assert!(c < 0.0, "stage {stage}: {c}");
    }
}

#[test]
fn training_is_deterministic() {
    let f = fixture();
    let mut a = f.model.clone();
    let mut b = f.model.clone();
    let ra = run(&f, &mut a, 1, 3).unwrap();
    let rb = run(&f, &mut b, 1, 3).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(flatten(&a), flatten(&b));
}
