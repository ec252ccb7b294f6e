//! Wireless energy transfer, transmission feasibility, and battery evolution
//! for ground users.

use serde::{Deserialize, Serialize};

use crate::channel::{pair_gain, BeamVector, ChannelVector};
use crate::config::WorldConfig;
use crate::error::SimError;
use crate::world::GuState;

/// Energy bookkeeping for one GU in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub harvested_joules: f64,
    pub consumed_joules: f64,
    pub feasible: bool,
}

/// Energy harvested by one GU over the transfer phase: beams and channels are
/// fixed within the phase, so the time integral is a plain product.
pub fn harvested_energy(
    gu_channels: &[ChannelVector],
    energy_beams: &[BeamVector],
    cfg: &WorldConfig,
) -> f64 {
    let received: f64 = gu_channels
        .iter()
        .zip(energy_beams)
        .map(|(h, w)| pair_gain(h, w).norm_sqr())
        .sum();
    cfg.world.t_e * cfg.power.eta_e * received
}

/// Whether the GU can afford this slot's uplink transmission, and the energy
/// it would burn.
pub fn tx_feasible(gu: &GuState, harvested: f64, cfg: &WorldConfig) -> (bool, f64) {
    let consumed = cfg.power.p_gu * cfg.world.t_s;
    let available = (gu.battery_joules + harvested).min(cfg.power.e_max);
    (consumed <= available + 1e-18, consumed)
}

/// Battery transition; `consumed` must be zero when the GU did not transmit.
pub fn battery_step(
    gu: &GuState,
    harvested: f64,
    consumed: f64,
    cfg: &WorldConfig,
) -> Result<f64, SimError> {
    let next = (gu.battery_joules + harvested - consumed).min(cfg.power.e_max);
    if next < -1e-15 {
        return Err(SimError::Invariant(format!(
            "battery fell below zero: {next}"
        )));
    }
    Ok(next.max(0.0))
}
