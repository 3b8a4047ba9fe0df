use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;

use super::{
    clutter_echo, draw_clutter, et_echo, partition_scatterers, si_channel, si_signal, visible_edges, Clutter,
    SiChannel, SlotSnapshot, TargetState,
};
use crate::beam::zeros;
use crate::config::SystemConfig;
use crate::error::Result;

/// The static environment of one episode: clutter scatterers and the
/// self-interference channel. Both stay fixed for every slot.
#[derive(Clone, Debug)]
pub struct Scene {
    pub cfg: SystemConfig,
    pub clutters: Vec<Clutter>,
    pub si: SiChannel,
}

impl Scene {
    /// Draws the episode clutter from `rng`; no draws are made when clutter
    /// is disabled.
    pub fn new<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let clutters = if cfg.clutter_enabled {
            draw_clutter(cfg, rng)
        } else {
            Vec::new()
        };
        Ok(Scene {
            cfg: cfg.clone(),
            clutters,
            si: si_channel(cfg)?,
        })
    }

    /// Synthesizes every component of one slot for the target in `state`
    /// illuminated by `tx`. The scatterer count K is drawn uniformly from the
    /// configured range with `scatter_rng`; noise comes from `noise_rng`.
    pub fn observe<R1: Rng, R2: Rng>(
        &self,
        state: &TargetState,
        tx: Vec<Complex64>,
        scatter_rng: &mut R1,
        noise_rng: &mut R2,
    ) -> Result<SlotSnapshot> {
        let cfg = &self.cfg;
        let k = scatter_rng.random_range(cfg.scatterers_min..=cfg.scatterers_max);
        let edges = visible_edges(state)?;
        let scatterers = partition_scatterers(&edges, k)?;
        let et = et_echo(&scatterers, &tx, cfg)?;
        let clutter = if cfg.clutter_enabled {
            clutter_echo(&self.clutters, &tx, cfg)?
        } else {
            zeros(cfg.n_rx)
        };
        let si = if cfg.si_enabled {
            si_signal(&self.si, &tx)?
        } else {
            zeros(cfg.n_rx)
        };
        let received = if cfg.clutter_enabled || cfg.si_enabled || cfg.noise_enabled {
            super::synthesize_received(&et, &clutter, &si, cfg, noise_rng)?
        } else {
            et.clone()
        };
        Ok(SlotSnapshot {
            tx,
            et_echo: et,
            clutter_echo: clutter,
            si,
            received,
        })
    }
}
