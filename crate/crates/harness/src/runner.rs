//! Run orchestration: training and evaluation over (variant, seed) pairs,
//! run-directory layout, checkpointing, and a bounded worker pool.
//!
//! A run directory holds the exact config used, a metadata document, and one
//! subdirectory per (variant, seed) with its metrics tables and checkpoint.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use uavsim_core::marl::Variant;
use uavsim_core::train::{eval_run, train_run, Checkpoint, EpisodeLog, Trainer};
use uavsim_core::{SimError, WorldConfig};

use crate::metrics::{
    write_episode_table, write_slot_table, write_to, EpisodeRow, SlotRow,
};

/// Environment variable capping the worker thread count for multi-run jobs.
pub const WORKERS_ENV: &str = "UAVSIM_WORKERS";

/// Resolved worker count: the env var when set, otherwise the machine's
/// available parallelism.
pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `count` independent jobs on a bounded pool and returns their results
/// in index order.
pub fn run_indexed<T, F>(count: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = job(i);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("job completed"))
        .collect()
}

/// Metadata document stored at the run root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub episodes: u64,
}

pub const RUN_META_VERSION: u32 = 1;

pub fn leg_dir(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join(format!("{}_seed{}", variant.as_str(), seed))
}

/// Result of one (variant, seed) training leg.
pub struct TrainedLeg {
    pub variant: Variant,
    pub seed: u64,
    pub trainer: Trainer,
    pub episodes: Vec<uavsim_core::train::EpisodeMetrics>,
    pub slot_rows: Vec<SlotRow>,
}

/// Trains one leg, capturing per-slot rows for persistence.
pub fn train_leg(
    cfg: &WorldConfig,
    variant: Variant,
    seed: u64,
    episodes: u64,
    keep_slots: bool,
) -> Result<TrainedLeg, SimError> {
    let mut slot_rows = Vec::new();
    let collector = |log: &EpisodeLog| {
        if keep_slots {
            for r in &log.slots {
                slot_rows.push(SlotRow {
                    variant: variant.as_str().to_string(),
                    seed,
                    episode: log.metrics.episode,
                    record: r.clone(),
                });
            }
        }
    };
    let (trainer, episodes) = train_run(cfg, variant, seed, episodes, collector)?;
    Ok(TrainedLeg { variant, seed, trainer, episodes, slot_rows })
}

/// Writes one leg's tables and checkpoint into the run directory.
pub fn persist_leg(root: &Path, cfg: &WorldConfig, leg: &TrainedLeg) -> Result<(), SimError> {
    let dir = leg_dir(root, leg.variant, leg.seed);
    std::fs::create_dir_all(&dir)
        .map_err(|e| SimError::Input(format!("{}: {e}", dir.display())))?;
    let episode_rows: Vec<EpisodeRow> = leg
        .episodes
        .iter()
        .map(|m| EpisodeRow {
            variant: leg.variant.as_str().to_string(),
            seed: leg.seed,
            metrics: m.clone(),
        })
        .collect();
    write_to(&dir.join("episodes.csv"), &write_episode_table(&episode_rows))?;
    if !leg.slot_rows.is_empty() {
        write_to(&dir.join("metrics.csv"), &write_slot_table(&leg.slot_rows))?;
    }
    let ckpt = Checkpoint::from_trainer(&leg.trainer).to_json()?;
    write_to(&dir.join("checkpoint.json"), &ckpt)?;
    let _ = cfg;
    Ok(())
}

/// Creates the run directory, stores the config copy and metadata.
pub fn init_run_dir(
    root: &Path,
    cfg_text: &str,
    meta: &RunMeta,
) -> Result<(), SimError> {
    std::fs::create_dir_all(root)
        .map_err(|e| SimError::Input(format!("{}: {e}", root.display())))?;
    write_to(&root.join("config.toml"), cfg_text)?;
    let meta_text = toml::to_string_pretty(meta)
        .map_err(|e| SimError::Input(format!("run metadata: {e}")))?;
    write_to(&root.join("run.toml"), &meta_text)?;
    Ok(())
}

pub fn read_run_meta(root: &Path) -> Result<RunMeta, SimError> {
    let text = crate::metrics::read_from(&root.join("run.toml"))?;
    toml::from_str(&text).map_err(|e| SimError::Input(format!("run.toml: {e}")))
}

pub fn read_run_config(root: &Path) -> Result<WorldConfig, SimError> {
    WorldConfig::load(&root.join("config.toml"))
}

/// Loads the checkpoint of one leg back into a trainer.
pub fn load_leg(root: &Path, cfg: &WorldConfig, variant: Variant, seed: u64) -> Result<Trainer, SimError> {
    let path = leg_dir(root, variant, seed).join("checkpoint.json");
    let text = crate::metrics::read_from(&path)?;
    Checkpoint::from_json(&text)?.into_trainer(cfg)
}

/// Aggregate of greedy evaluation rollouts for one leg.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub variant: String,
    pub seed: u64,
    pub episodes: u64,
    pub throughput_per_slot: f64,
    pub accumulated_bits: f64,
    pub mean_delay: f64,
    pub delay_var: f64,
    pub contacts_per_uav_slot: f64,
    pub info_error: f64,
    pub reward_mean: f64,
}

/// Greedy evaluation of a trained leg; optionally records the last episode's
/// trajectories in scaled coordinates.
pub fn eval_leg(
    trainer: &mut Trainer,
    episodes: u64,
    record_trajectory: bool,
) -> Result<(EvalSummary, Option<EpisodeLog>), SimError> {
    let (metrics, last) = eval_run(trainer, episodes, record_trajectory)?;
    let count = metrics.len() as f64;
    let slots = trainer.cfg.run.slots_per_episode as f64;
    let summary = EvalSummary {
        variant: trainer.variant.as_str().to_string(),
        seed: trainer.seed,
        episodes,
        throughput_per_slot: metrics.iter().map(|m| m.bs_bits_total).sum::<f64>()
            / (count * slots),
        accumulated_bits: metrics.iter().map(|m| m.bs_bits_total).sum::<f64>() / count,
        mean_delay: metrics.iter().map(|m| m.mean_delay).sum::<f64>() / count,
        delay_var: metrics.iter().map(|m| m.delay_var).sum::<f64>() / count,
        contacts_per_uav_slot: metrics.iter().map(|m| m.contacts_per_uav_slot).sum::<f64>()
            / count,
        info_error: metrics.iter().map(|m| m.info_error).sum::<f64>() / count,
        reward_mean: metrics.iter().map(|m| m.reward_mean).sum::<f64>() / count,
    };
    Ok((summary, last))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

/// Writes a trajectory table in the scaled [-1, 1] presentation coordinates.
pub fn write_trajectory_csv(
    log: &EpisodeLog,
    cfg: &WorldConfig,
    gu_positions: &[[f64; 3]],
) -> String {
    use std::fmt::Write as _;
    let w = cfg.world.area_half_width;
    let mut out = String::new();
    writeln!(out, "# uavsim-trajectory v1").unwrap();
    writeln!(out, "kind,id,slot,x,y").unwrap();
    writeln!(out, "bs,0,0,{},{}", cfg.world.bs_x / w, cfg.world.bs_y / w).unwrap();
    for (m, g) in gu_positions.iter().enumerate() {
        writeln!(out, "gu,{m},0,{},{}", g[0] / w, g[1] / w).unwrap();
    }
    if let Some(trajs) = &log.trajectories {
        for (n, traj) in trajs.iter().enumerate() {
            for (t, p) in traj.iter().enumerate() {
                writeln!(out, "uav,{n},{},{},{}", t + 1, p[0] / w, p[1] / w).unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavsim_core::test_support::desk_config;

    fn tiny_cfg() -> WorldConfig {
        let mut cfg = desk_config();
        cfg.run.slots_per_episode = 20;
        cfg.marl.hidden = 8;
        cfg.marl.batch = 4;
        cfg.marl.warmup_slots = 8;
        cfg.predictor.tau0 = 3;
        cfg.predictor.d_e = 4;
        cfg.predictor.d_k = 4;
        cfg.predictor.d_v = 4;
        cfg.predictor.d_s = 4;
        cfg.predictor.n_heads = 1;
        cfg
    }

    #[test]
    fn pool_preserves_index_order() {
        let out = run_indexed(17, 4, |i| i * i);
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn leg_round_trip_through_directory() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let leg = train_leg(&cfg, Variant::Ideal, 3, 2, true).unwrap();
        persist_leg(dir.path(), &cfg, &leg).unwrap();
        let restored = load_leg(dir.path(), &cfg, Variant::Ideal, 3).unwrap();
        assert_eq!(restored.nets[0].actor, leg.trainer.nets[0].actor);
        let text =
            crate::metrics::read_from(&leg_dir(dir.path(), Variant::Ideal, 3).join("episodes.csv"))
                .unwrap();
        let rows = crate::metrics::parse_episode_table(&text).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn eval_summary_is_deterministic() {
        let cfg = tiny_cfg();
        let leg = train_leg(&cfg, Variant::CommLimited, 5, 2, false).unwrap();
        let mut t1 = leg.trainer;
        let (s1, _) = eval_leg(&mut t1, 2, false).unwrap();
        let leg2 = train_leg(&cfg, Variant::CommLimited, 5, 2, false).unwrap();
        let mut t2 = leg2.trainer;
        let (s2, _) = eval_leg(&mut t2, 2, false).unwrap();
        assert_eq!(s1.throughput_per_slot, s2.throughput_per_slot);
        assert_eq!(s1.mean_delay, s2.mean_delay);
    }
}
