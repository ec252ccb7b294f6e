//! BS-side information table, contact/delay accounting, and the two reward
//! functions.

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::SimError;
use crate::linkplan::FlowReport;

/// One cached observation with the slot it was reported in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedObs {
    pub obs: Vec<f64>,
    pub report_slot: u64,
}

/// The BS's cache of each UAV's last-reported observation, with last-contact
/// slots and current delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoTable {
    entries: Vec<CachedObs>,
    last_contact: Vec<u64>,
    delay: Vec<u64>,
}

impl InfoTable {
    /// Initializes with a full synchronized report at slot 0.
    pub fn new(initial_obs: &[Vec<f64>]) -> Self {
        InfoTable {
            entries: initial_obs
                .iter()
                .map(|o| CachedObs { obs: o.clone(), report_slot: 0 })
                .collect(),
            last_contact: vec![0; initial_obs.len()],
            delay: vec![0; initial_obs.len()],
        }
    }

    pub fn n_uavs(&self) -> usize {
        self.entries.len()
    }

    pub fn cached(&self, n: usize) -> &CachedObs {
        &self.entries[n]
    }

    pub fn last_contact(&self, n: usize) -> u64 {
        self.last_contact[n]
    }

    pub fn delay(&self, n: usize) -> u64 {
        self.delay[n]
    }

    pub fn delays(&self) -> &[u64] {
        &self.delay
    }

    /// Applies one slot of contact outcomes: UAVs with a BS link this slot
    /// overwrite their cached entry; everyone's delay is re-derived.
    pub fn advance(
        &mut self,
        t: u64,
        contacted: &[bool],
        fresh_obs: &[Vec<f64>],
    ) -> Result<(), SimError> {
        if contacted.len() != self.entries.len() || fresh_obs.len() != self.entries.len() {
            return Err(SimError::Input("contact/observation arity mismatch".into()));
        }
        for n in 0..self.entries.len() {
            let phi = contacted[n];
            self.last_contact[n] = update_contact(self.last_contact[n], phi, t);
            if phi {
                self.entries[n] = CachedObs { obs: fresh_obs[n].clone(), report_slot: t };
            }
            self.delay[n] = info_delay(t, self.last_contact[n])?;
        }
        Ok(())
    }
}

/// Last-contact bookkeeping: keeps the previous slot unless a contact happens
/// now.
pub fn update_contact(c_prev: u64, contacted: bool, t: u64) -> u64 {
    if contacted {
        t
    } else {
        c_prev
    }
}

/// Slots elapsed since the last contact; zero on a contact slot.
pub fn info_delay(t: u64, c_n: u64) -> Result<u64, SimError> {
    if c_n > t {
        return Err(SimError::Invariant(format!(
            "contact slot {c_n} lies in the future of {t}"
        )));
    }
    Ok(t - c_n)
}

/// The state vector UAV `n` acts on: its own fresh observation concatenated
/// with the cached (possibly stale) observations of all other UAVs, in fixed
/// UAV order.
pub fn snapshot_for(
    n: usize,
    table: &InfoTable,
    own_obs: &[f64],
) -> Result<Vec<f64>, SimError> {
    if n >= table.n_uavs() {
        return Err(SimError::Input(format!("UAV index {n} out of range")));
    }
    let mut out = Vec::with_capacity(table.n_uavs() * own_obs.len());
    for k in 0..table.n_uavs() {
        if k == n {
            out.extend_from_slice(own_obs);
        } else {
            let cached = table.cached(k);
            if cached.obs.len() != own_obs.len() {
                return Err(SimError::Input("cached entry dimension mismatch".into()));
            }
            out.extend_from_slice(&cached.obs);
        }
    }
    Ok(out)
}

/// Shared per-slot reward: weighted BS throughput plus the weighted safety
/// compliance counts.
pub fn reward_base(flow: &FlowReport, z: &[u32], cfg: &WorldConfig) -> f64 {
    flow.bs_delivered
        .iter()
        .zip(z)
        .map(|(d, &zn)| cfg.reward.mu1 * d + cfg.reward.mu2 * zn as f64)
        .sum()
}

/// Delay-penalized shared reward: throughput weighted by omega1 and each
/// UAV's information delay charged at omega2, both inside the mu1 factor.
pub fn reward_delay_penalized(
    flow: &FlowReport,
    z: &[u32],
    delays: &[u64],
    cfg: &WorldConfig,
) -> f64 {
    flow.bs_delivered
        .iter()
        .zip(z)
        .zip(delays)
        .map(|((d, &zn), &dl)| {
            cfg.reward.mu1 * (cfg.reward.omega1 * d - cfg.reward.omega2 * dl as f64)
                + cfg.reward.mu2 * zn as f64
        })
        .sum()
}

/// Mean L1 gap between a state view and the ground truth, restricted to the
/// UAVs whose entries are stale, averaged per UAV. `view` and `truth` are
/// per-UAV observation vectors in raw units.
pub fn info_error(view: &[Vec<f64>], truth: &[Vec<f64>], delays: &[u64]) -> f64 {
    let stale: Vec<usize> = delays
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0)
        .map(|(n, _)| n)
        .collect();
    if stale.is_empty() {
        return 0.0;
    }
    let total: f64 = stale
        .iter()
        .map(|&n| {
            view[n]
                .iter()
                .zip(&truth[n])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum();
    total / stale.len() as f64
}
