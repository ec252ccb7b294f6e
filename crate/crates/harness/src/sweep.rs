//! Delay-weight sweep: trains one STA run per omega2 grid point and maps the
//! realized U2B contact frequency to converged throughput and delay.

use uavsim_core::marl::Variant;
use uavsim_core::{SimError, WorldConfig};

use crate::metrics::SweepRow;
use crate::runner::{eval_leg, run_indexed, train_leg};

/// Trains and evaluates one grid point across the given seeds, sequentially
/// inside the calling worker.
fn sweep_point(
    base: &WorldConfig,
    omega2: f64,
    seeds: &[u64],
    episodes: u64,
    eval_episodes: u64,
) -> Result<SweepRow, SimError> {
    let mut cfg = base.clone();
    cfg.reward.omega2 = omega2;
    let mut freqs = Vec::new();
    let mut throughputs = Vec::new();
    let mut delays = Vec::new();
    let mut accs = Vec::new();
    for &seed in seeds {
        let leg = train_leg(&cfg, Variant::Sta, seed, episodes, false)?;
        let mut trainer = leg.trainer;
        let (summary, _) = eval_leg(&mut trainer, eval_episodes, false)?;
        freqs.push(summary.contacts_per_uav_slot);
        throughputs.push(summary.throughput_per_slot);
        delays.push(summary.mean_delay);
        accs.push(summary.accumulated_bits);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SweepRow {
        omega2,
        u2b_freq: mean(&freqs),
        throughput_per_slot: mean(&throughputs),
        mean_delay: mean(&delays),
        accumulated_bits: mean(&accs),
    })
}

/// Runs the whole grid, parallelized across grid points.
pub fn sweep_omega2(
    base: &WorldConfig,
    grid: &[f64],
    seeds: &[u64],
    episodes: u64,
    eval_episodes: u64,
    workers: usize,
) -> Result<Vec<SweepRow>, SimError> {
    if grid.is_empty() {
        return Err(SimError::Input("empty omega2 grid".into()));
    }
    let results = run_indexed(grid.len(), workers, |i| {
        sweep_point(base, grid[i], seeds, episodes, eval_episodes)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavsim_core::test_support::desk_config;

    #[test]
    fn single_point_grid_yields_single_row() {
        let mut cfg = desk_config();
        cfg.run.slots_per_episode = 15;
        cfg.marl.hidden = 8;
        cfg.marl.batch = 4;
        cfg.marl.warmup_slots = 8;
        cfg.predictor.tau0 = 3;
        cfg.predictor.d_e = 4;
        cfg.predictor.d_k = 4;
        cfg.predictor.d_v = 4;
        cfg.predictor.d_s = 4;
        cfg.predictor.n_heads = 1;
        cfg.predictor.warmup_episodes = 1;
        let rows = sweep_omega2(&cfg, &[0.05], &[1], 2, 1, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].omega2, 0.05);
    }

    #[test]
    fn empty_grid_is_error() {
        let cfg = desk_config();
        assert!(sweep_omega2(&cfg, &[], &[1], 1, 1, 1).is_err());
    }
}
