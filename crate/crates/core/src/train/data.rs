use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TrainingConfig;
use crate::beam::{draw_symbol, transmit, BeamPlan};
use crate::config::{SystemConfig, TrajectoryParams};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::sim::{generate_trajectory_len, unwrap_angles, wrap_angle, Scene, SlotSnapshot, TargetState};
use crate::tracknet::{Normalizer, PhiVector, Stat, ThetaVector, INITIAL_SIDE_M};

/// Gaussian corruption of ground truth used for the initial state and for
/// beam pointing while generating data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorNoise {
    /// Standard deviations for `[x, y, phi, vx, vy, phi_rate, L, W]`.
    pub sigma: [f64; 8],
    /// Side of the square contour assigned to every initial state.
    pub initial_side_m: f64,
}

impl Default for PriorNoise {
    fn default() -> Self {
        PriorNoise {
            sigma: [1.0, 1.0, 0.1, 0.5, 0.5, 0.02, 0.5, 0.5],
            initial_side_m: INITIAL_SIDE_M,
        }
    }
}

impl PriorNoise {
    pub fn perturb<R: Rng>(&self, phi: &PhiVector, rng: &mut R) -> PhiVector {
        let mut out = *phi;
        for (v, s) in out.0.iter_mut().zip(self.sigma) {
            let z: f64 = StandardNormal.sample(rng);
            *v += s * z;
        }
        // Keep the contour usable for beam planning.
        out.0[6] = out.0[6].max(0.1);
        out.0[7] = out.0[7].max(0.1);
        out
    }

    /// `prior` with its contour replaced by the initial square.
    pub fn initial(&self, prior: &PhiVector) -> PhiVector {
        let mut out = *prior;
        out.0[6] = self.initial_side_m;
        out.0[7] = self.initial_side_m;
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(self.initial_side_m > 0.0) {
            return Err(Error::Config("prior noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One simulated episode with truth-driven beams.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeData {
    pub id: u64,
    /// `n_slots + 1` states; state 0 precedes the first observed slot.
    pub truth: Vec<TargetState>,
    /// Truth as filter states with the heading unwrapped.
    pub phi_truth: Vec<PhiVector>,
    /// Noisy copy of the previous true state, per observed slot.
    pub priors: Vec<PhiVector>,
    pub plans: Vec<BeamPlan>,
    pub snapshots: Vec<SlotSnapshot>,
}

/// Simulates episode `id`: beams for slot n are planned from a noisy copy of
/// the true state at slot n-1.
pub fn simulate_episode(
    cfg: &SystemConfig,
    traj: &TrajectoryParams,
    prior: &PriorNoise,
    root_seed: u64,
    id: u64,
) -> Result<EpisodeData> {
    let n = cfg.n_slots;
    let truth = generate_trajectory_len(
        n + 1,
        cfg.slot_interval_s,
        traj,
        seed::derive(root_seed, Stream::Trajectory, id),
    )?;
    let headings = unwrap_angles(&truth.iter().map(|s| s.phi_rad).collect::<Vec<_>>());
    let phi_truth: Vec<PhiVector> = truth
        .iter()
        .zip(&headings)
        .map(|(s, h)| {
            let mut p = PhiVector::from_state(s);
            p.0[2] = *h;
            p
        })
        .collect();
    let scene = Scene::new(cfg, &mut seed::rng(root_seed, Stream::Clutter, id))?;
    let mut prior_rng = seed::rng(root_seed, Stream::BeamPointing, id);
    let mut sym_rng = seed::rng(root_seed, Stream::Symbols, id);
    let mut scat_rng = seed::rng(root_seed, Stream::Scatterers, id);
    let mut noise_rng = seed::rng(root_seed, Stream::Noise, id);
    let p_tx = cfg.tx_power_w();
    let mut priors = Vec::with_capacity(n);
    let mut plans = Vec::with_capacity(n);
    let mut snapshots = Vec::with_capacity(n);
    for slot in 1..=n {
        let at = |e: Error| e.at_slot(slot);
        let p = prior.perturb(&phi_truth[slot - 1], &mut prior_rng);
        let plan = BeamPlan::from_state(&p, cfg.slot_interval_s, cfg.n_tx).map_err(at)?;
        let w = plan.beamformer(cfg.n_tx).map_err(at)?;
        let tx = transmit(&w, draw_symbol(&mut sym_rng), p_tx);
        let snap = scene
            .observe(&truth[slot], tx, &mut scat_rng, &mut noise_rng)
            .map_err(at)?;
        priors.push(p);
        plans.push(plan);
        snapshots.push(snap);
    }
    Ok(EpisodeData {
        id,
        truth,
        phi_truth,
        priors,
        plans,
        snapshots,
    })
}

/// A fixed-length training sample. Complex signals are stored slot-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub episode: u64,
    /// Episode slot number of the first slot (1-based).
    pub first_slot: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub tx: Vec<Complex64>,
    pub rx: Vec<Complex64>,
    pub echo: Vec<Complex64>,
    pub theta: Vec<ThetaVector>,
    /// Previous-state input per slot: `phi0` first, then the noisy priors.
    pub teacher: Vec<PhiVector>,
    pub phi0: PhiVector,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn tx_at(&self, n: usize) -> &[Complex64] {
        &self.tx[n * self.n_tx..(n + 1) * self.n_tx]
    }

    pub fn rx_at(&self, n: usize) -> &[Complex64] {
        &self.rx[n * self.n_rx..(n + 1) * self.n_rx]
    }

    pub fn echo_at(&self, n: usize) -> &[Complex64] {
        &self.echo[n * self.n_rx..(n + 1) * self.n_rx]
    }
}

/// Cuts an episode into consecutive samples of `sample_len` slots; a
/// trailing remainder is dropped. Headings are shifted by a multiple of
/// 2 pi so that each sample's initial heading lies in (-pi, pi].
pub fn slice_episode(ep: &EpisodeData, sample_len: usize, prior: &PriorNoise) -> Vec<Sample> {
    let n_tx = ep.snapshots.first().map_or(0, |s| s.tx.len());
    let n_rx = ep.snapshots.first().map_or(0, |s| s.received.len());
    let count = if sample_len == 0 {
        0
    } else {
        ep.snapshots.len() / sample_len
    };
    (0..count)
        .map(|k| {
            let s0 = k * sample_len;
            let mut phi0 = prior.initial(&ep.priors[s0]);
            let shift = wrap_angle(phi0.0[2]) - phi0.0[2];
            phi0.0[2] += shift;
            let mut sample = Sample {
                episode: ep.id,
                first_slot: s0 + 1,
                n_tx,
                n_rx,
                tx: Vec::with_capacity(sample_len * n_tx),
                rx: Vec::with_capacity(sample_len * n_rx),
                echo: Vec::with_capacity(sample_len * n_rx),
                theta: Vec::with_capacity(sample_len),
                teacher: Vec::with_capacity(sample_len),
                phi0,
            };
            for s in s0..s0 + sample_len {
                let snap = &ep.snapshots[s];
                sample.tx.extend_from_slice(&snap.tx);
                sample.rx.extend_from_slice(&snap.received);
                sample.echo.extend_from_slice(&snap.et_echo);
                let mut th = ep.phi_truth[s + 1].project();
                th.0[2] += shift;
                sample.theta.push(th);
                let mut t = if s == s0 { phi0 } else { ep.priors[s] };
                if s != s0 {
                    t.0[2] += shift;
                }
                sample.teacher.push(t);
            }
            sample
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    /// First episode id of the split; ranges never overlap.
    pub fn episode_base(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1 << 40,
            Split::Test => 2 << 40,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Train/validation/test samples plus normalization from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub norm: Normalizer,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Sample] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn compute_normalizer(train: &[Sample]) -> Normalizer {
    Normalizer {
        tx: Stat::from_complex(train.iter().flat_map(|s| s.tx.iter())),
        rx: Stat::from_complex(train.iter().flat_map(|s| s.rx.iter())),
        echo: Stat::from_complex(train.iter().flat_map(|s| s.echo.iter())),
    }
}

/// Episodes needed for `m` samples.
pub fn episodes_for(m: usize, per_episode: usize) -> usize {
    m.div_ceil(per_episode)
}

/// Simulates and slices enough episodes for every split.
pub fn build_dataset(
    cfg: &SystemConfig,
    traj: &TrajectoryParams,
    prior: &PriorNoise,
    tcfg: &TrainingConfig,
    root_seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    traj.validate()?;
    prior.validate()?;
    tcfg.validate()?;
    let per = cfg.n_slots / tcfg.sample_len;
    if per == 0 {
        return Err(Error::Config(alloc::format!(
            "sample_len {} exceeds the episode length {}",
            tcfg.sample_len,
            cfg.n_slots
        )));
    }
    let mut splits: [Vec<Sample>; 3] = Default::default();
    for (split, m) in Split::ALL.into_iter().zip([tcfg.m_train, tcfg.m_val, tcfg.m_test]) {
        let out = &mut splits[split as usize];
        for e in 0..episodes_for(m, per) as u64 {
            let ep = simulate_episode(cfg, traj, prior, root_seed, split.episode_base() + e)?;
            out.extend(slice_episode(&ep, tcfg.sample_len, prior));
        }
        out.truncate(m);
    }
    let [train, val, test] = splits;
    let norm = compute_normalizer(&train);
    Ok(Dataset { train, val, test, norm })
}
