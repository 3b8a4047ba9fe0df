//! Closed-loop episode records and their evaluation.

use std::path::{Path, PathBuf};

use anyhow::Context;
use isac_track_core::metrics::{evaluate_episode, Aggregates, MetricsRecord, SlotMetrics, Symmetry};
use isac_track_core::seed::{self, Stream};
use isac_track_core::sim::{generate_trajectory_len, Scene, TargetState};
use isac_track_core::tracknet::{
    track_episode, EpisodeInputs, PhiVector, StateSpaceModel, ThetaVector, TrackMode, TrackNetModel,
};
use isac_track_core::train::Split;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// One tracked slot as written to `episode_<id>.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub slot: usize,
    /// 1 while the target turns, 0 on straight legs.
    pub turning: u8,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_phi: f64,
    pub truth_l: f64,
    pub truth_w: f64,
    pub inst_x: f64,
    pub inst_y: f64,
    pub inst_phi: f64,
    pub inst_l: f64,
    pub inst_w: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_phi: f64,
    pub est_l: f64,
    pub est_w: f64,
}

impl TrackRow {
    pub fn truth(&self) -> ThetaVector {
        ThetaVector([self.truth_x, self.truth_y, self.truth_phi, self.truth_l, self.truth_w])
    }

    pub fn estimate(&self) -> ThetaVector {
        ThetaVector([self.est_x, self.est_y, self.est_phi, self.est_l, self.est_w])
    }
}

/// Truth, scene and noisy initial state of test episode `index`.
pub struct EpisodeSetup {
    pub id: u64,
    pub scene: Scene,
    pub truth: Vec<TargetState>,
    pub phi0: PhiVector,
}

pub fn episode_setup(cfg: &RunConfig, index: u64) -> anyhow::Result<EpisodeSetup> {
    let id = Split::Test.episode_base() + index;
    let sys = &cfg.system;
    let truth = generate_trajectory_len(
        sys.n_slots + 1,
        sys.slot_interval_s,
        &cfg.trajectory,
        seed::derive(cfg.seed, Stream::Trajectory, id),
    )?;
    let scene = Scene::new(sys, &mut seed::rng(cfg.seed, Stream::Clutter, id))?;
    let noisy = cfg.prior.perturb(
        &PhiVector::from_state(&truth[0]),
        &mut seed::rng(cfg.seed, Stream::InitialState, id),
    );
    Ok(EpisodeSetup {
        id,
        scene,
        truth,
        phi0: cfg.prior.initial(&noisy),
    })
}

pub fn track_one(
    cfg: &RunConfig,
    setup: &EpisodeSetup,
    model: Option<&TrackNetModel>,
    mode: &TrackMode,
) -> anyhow::Result<Vec<TrackRow>> {
    let ssm = StateSpaceModel::new(cfg.system.slot_interval_s);
    let slots = track_episode(
        model,
        &ssm,
        EpisodeInputs {
            scene: &setup.scene,
            truth: &setup.truth,
            phi0: setup.phi0,
            root_seed: cfg.seed,
            episode: setup.id,
        },
        mode,
    )
    .with_context(|| format!("tracking episode {}", setup.id))?;
    Ok(slots
        .iter()
        .map(|s| {
            let t = ThetaVector::from_state(&setup.truth[s.slot]).0;
            let (i, e) = (s.theta_inst.0, s.theta.0);
            TrackRow {
                slot: s.slot,
                turning: (setup.truth[s.slot].phi_rate_rps != 0.0) as u8,
                truth_x: t[0],
                truth_y: t[1],
                truth_phi: t[2],
                truth_l: t[3],
                truth_w: t[4],
                inst_x: i[0],
                inst_y: i[1],
                inst_phi: i[2],
                inst_l: i[3],
                inst_w: i[4],
                est_x: e[0],
                est_y: e[1],
                est_phi: e[2],
                est_l: e[3],
                est_w: e[4],
            }
        })
        .collect())
}

pub fn episode_file(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("episode_{id}.csv"))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<TrackRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<TrackRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub all: Aggregates,
    pub straight: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: String,
    pub episodes: Vec<EpisodeSummary>,
    pub all: Aggregates,
    /// Slots on straight legs only.
    pub straight: Aggregates,
}

/// Metrics of one track file.
pub fn evaluate_rows(rows: &[TrackRow]) -> anyhow::Result<MetricsRecord> {
    let truth: Vec<ThetaVector> = rows.iter().map(TrackRow::truth).collect();
    let est: Vec<ThetaVector> = rows.iter().map(TrackRow::estimate).collect();
    let mut rec = evaluate_episode(&truth, &est, rows.first().map_or(1, |r| r.slot), Symmetry::Half)?;
    for (m, r) in rec.slots.iter_mut().zip(rows) {
        m.slot = r.slot;
    }
    Ok(rec)
}

pub fn straight_slots<'a>(rows: &'a [TrackRow], rec: &'a MetricsRecord) -> impl Iterator<Item = &'a SlotMetrics> {
    rec.slots
        .iter()
        .zip(rows)
        .filter(|(_, r)| r.turning == 0)
        .map(|(m, _)| m)
}
