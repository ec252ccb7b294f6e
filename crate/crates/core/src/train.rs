//! Episode runner and training loop: builds each agent's state view per
//! variant, drives the actors, records transitions and per-slot metrics, and
//! interleaves critic/actor updates with online predictor training.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Adam;
use crate::config::WorldConfig;
use crate::env::Env;
use crate::error::SimError;
use crate::infocache::{info_error, snapshot_for};
use crate::marl::{
    update_step, ActionLayout, ActionRecord, AgentNets, Exploration,
    FeasibleMasks, ReplayBuffer, Transition, Variant,
};
use crate::predictor::{
    predict_state, train_predictor_step, AttentionParams, HistoryWindow, TrainSample,
};
use crate::rng::{stream, StreamKind};

/// One slot's logged measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: u64,
    pub bs_bits: f64,
    pub acc_bits: f64,
    pub mean_delay: f64,
    pub delay_var: f64,
    pub contacts: u32,
    pub info_error: f64,
    pub reward: f64,
}

/// Per-episode aggregates of the slot records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub bs_bits_total: f64,
    pub mean_delay: f64,
    pub delay_var: f64,
    pub contacts_per_uav_slot: f64,
    pub info_error: f64,
    pub reward_mean: f64,
}

/// Everything recorded while running one episode.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub metrics: EpisodeMetrics,
    pub slots: Vec<SlotRecord>,
    /// Per-UAV planar positions per slot, when requested.
    pub trajectories: Option<Vec<Vec<[f64; 2]>>>,
}

/// Owns the learning state for one (variant, seed) run.
pub struct Trainer {
    pub cfg: WorldConfig,
    pub variant: Variant,
    pub seed: u64,
    pub nets: Vec<AgentNets>,
    pub replay: ReplayBuffer,
    pub predictor: AttentionParams,
    pub predictor_opt: Adam,
    predictor_replay: Vec<TrainSample>,
    predictor_next: usize,
    pub episodes_done: u64,
}

impl Trainer {
    pub fn new(cfg: &WorldConfig, variant: Variant, seed: u64) -> Self {
        let mut nets = Vec::with_capacity(cfg.world.n_uavs);
        for agent in 0..cfg.world.n_uavs {
            let mut rng = stream(seed, StreamKind::Init, [agent as u64, 0, 0, 0]);
            nets.push(AgentNets::init(cfg, &mut rng));
        }
        let mut prng = stream(seed, StreamKind::Init, [u64::MAX, 0, 0, 0]);
        Trainer {
            nets,
            replay: ReplayBuffer::new(cfg.marl.replay_capacity),
            predictor: AttentionParams::init(cfg, &mut prng),
            predictor_opt: Adam::new(cfg.predictor.lr),
            predictor_replay: Vec::new(),
            predictor_next: 0,
            episodes_done: 0,
            cfg: cfg.clone(),
            variant,
            seed,
        }
    }

    /// Whether the corrected state replaces the cached snapshot yet.
    pub fn predictor_active(&self) -> bool {
        self.variant == Variant::Sta
            && self.episodes_done >= self.cfg.predictor.warmup_episodes as u64
    }

    fn push_predictor_sample(&mut self, sample: TrainSample) {
        let cap = self.cfg.predictor.buffer_capacity;
        if self.predictor_replay.len() < cap {
            self.predictor_replay.push(sample);
        } else {
            self.predictor_replay[self.predictor_next] = sample;
        }
        self.predictor_next = (self.predictor_next + 1) % cap;
    }

    /// Exploration schedule for a training episode.
    pub fn exploration_at(&self, episode: u64) -> Exploration {
        let m = &self.cfg.marl;
        Exploration {
            noise_scale: (m.noise_init * m.noise_decay.powi(episode as i32)).max(m.noise_min),
            epsilon: (m.eps_init * m.eps_decay.powi(episode as i32)).max(m.eps_min),
        }
    }
}

/// Builds every agent's state view for the current slot, plus the info-error
/// measurement of the view actually used.
fn build_states(
    variant: Variant,
    env: &Env,
    windows: &[HistoryWindow],
    trainer: &Trainer,
) -> Result<(Vec<Vec<f64>>, f64), SimError> {
    let n = env.cfg.world.n_uavs;
    let norm = env.norm();
    let truth_raw = env.raw_obs();
    let truth_norm = env.normalized_obs();
    let delays = env.table.delays().to_vec();

    match variant {
        Variant::Ideal => {
            let flat: Vec<f64> = truth_norm.concat();
            Ok(((0..n).map(|_| flat.clone()).collect(), 0.0))
        }
        Variant::CommLimited | Variant::DelayTolerant => {
            let mut states = Vec::with_capacity(n);
            for agent in 0..n {
                let raw = snapshot_for(agent, &env.table, &truth_raw[agent])?;
                let mut s = Vec::with_capacity(raw.len());
                for chunk in raw.chunks(3) {
                    s.extend(norm.normalize_obs(&[chunk[0], chunk[1], chunk[2]]));
                }
                states.push(s);
            }
            let cached: Vec<Vec<f64>> =
                (0..n).map(|k| env.table.cached(k).obs.clone()).collect();
            let err = info_error(&cached, &truth_raw, &delays);
            Ok((states, err))
        }
        Variant::Sta => {
            if !trainer.predictor_active() {
                return build_states(Variant::DelayTolerant, env, windows, trainer);
            }
            let fused = predict_state(windows, &trainer.predictor)?;
            let view_raw: Vec<Vec<f64>> = fused
                .chunks(3)
                .map(|c| norm.denormalize_obs(c).to_vec())
                .collect();
            let err = info_error(&view_raw, &truth_raw, &delays);
            Ok(((0..n).map(|_| fused.clone()).collect(), err))
        }
    }
}

/// Runs one episode of the chosen variant: per slot the agents act on their
/// variant's state view, the environment advances through its phases, and
/// (when training) the critics, actors, and predictor take their updates.
pub fn run_episode(
    variant: Variant,
    env: &mut Env,
    trainer: &mut Trainer,
    episode: u64,
    train: bool,
    record_trajectories: bool,
) -> Result<EpisodeLog, SimError> {
    if variant != trainer.variant {
        return Err(SimError::Input(format!(
            "trainer built for {}, episode requested {}",
            trainer.variant.as_str(),
            variant.as_str()
        )));
    }
    let cfg = trainer.cfg.clone();
    let n = cfg.world.n_uavs;
    let slots = cfg.run.slots_per_episode as u64;
    let layout = ActionLayout::new(&cfg);
    env.reset(episode);

    let explore = if train {
        trainer.exploration_at(episode)
    } else {
        Exploration::greedy()
    };

    let mut windows: Vec<HistoryWindow> = env
        .normalized_obs()
        .into_iter()
        .map(|o| HistoryWindow::filled(&o, cfg.predictor.tau0))
        .collect();

    let mut explore_rngs: Vec<_> = (0..n)
        .map(|agent| stream(trainer.seed, StreamKind::Exploration, [episode, agent as u64, 0, 0]))
        .collect();
    let mut sample_rng = stream(trainer.seed, StreamKind::Sampling, [episode, 1, 0, 0]);
    let mut pred_rng = stream(trainer.seed, StreamKind::Sampling, [episode, 2, 0, 0]);

    let mut pending_pred: VecDeque<(u64, Vec<HistoryWindow>)> = VecDeque::new();
    let mut pred_targets: Vec<(u64, Vec<f64>)> = Vec::new();

    let (mut states, mut info_err) = build_states(variant, env, &windows, trainer)?;
    let mut slot_records = Vec::with_capacity(slots as usize);
    let mut trajectories: Option<Vec<Vec<[f64; 2]>>> =
        record_trajectories.then(|| vec![Vec::with_capacity(slots as usize); n]);
    let mut acc_bits = 0.0;

    for t in 1..=slots {
        // actors: velocities first, then post-move masks gate the discrete heads
        let mut raw_velocities = Vec::with_capacity(n);
        for agent in 0..n {
            let out = trainer.nets[agent]
                .actor
                .forward_plain(&crate::autodiff::Matrix::row_vec(&states[agent]));
            let o = out.row(0);
            let gauss = |rng: &mut rand_chacha::ChaCha8Rng| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen::<f64>();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            let vx = o[0].tanh() * cfg.world.v_max
                + explore.noise_scale * cfg.world.v_max * gauss(&mut explore_rngs[agent]);
            let vy = o[1].tanh() * cfg.world.v_max
                + explore.noise_scale * cfg.world.v_max * gauss(&mut explore_rngs[agent]);
            raw_velocities.push(([vx, vy], out));
        }
        let velocities: Vec<[f64; 2]> = raw_velocities.iter().map(|(v, _)| *v).collect();
        let moved = env.peek_moved(&velocities)?;

        let mut actions = Vec::with_capacity(n);
        let mut masks_per_agent: Vec<FeasibleMasks> = Vec::with_capacity(n);
        for agent in 0..n {
            let masks = env.masks_at(agent, &moved);
            let (velocity, raw_out) = &raw_velocities[agent];
            let record = select_discrete(
                raw_out.row(0),
                *velocity,
                agent,
                &masks,
                explore,
                &mut explore_rngs[agent],
                &layout,
            );
            actions.push(record);
            masks_per_agent.push(masks);
        }

        // capture the windows that predicted this slot before they roll
        if variant == Variant::Sta && train {
            pending_pred.push_back((t, windows.clone()));
        }

        let out = env.step(&actions)?;
        acc_bits += out.bs_bits;

        // roll the BS-cache view into each window
        let cached_norm = env.normalized_cached_obs();
        for (w, o) in windows.iter_mut().zip(&cached_norm) {
            w.push(o);
        }

        if variant == Variant::Sta && train {
            pred_targets.push((t, env.normalized_obs().concat()));
            // truth for slot s is revealed once every UAV has contacted at or
            // after s
            let watermark = (0..n).map(|k| env.table.last_contact(k)).min().unwrap_or(0);
            while pending_pred
                .front()
                .is_some_and(|(s, _)| *s <= watermark)
            {
                let (s, wins) = pending_pred.pop_front().unwrap();
                let target = pred_targets
                    .iter()
                    .find(|(ts, _)| *ts == s)
                    .map(|(_, v)| v.clone())
                    .expect("target logged for every slot");
                trainer.push_predictor_sample(TrainSample { windows: wins, target_state: target });
            }
        }

        let reward = if variant.uses_delay_penalty() {
            out.reward_delay
        } else {
            out.reward_base
        };

        let (next_states, next_err) = build_states(variant, env, &windows, trainer)?;

        if train {
            let encoded: Vec<Vec<f64>> = actions
                .iter()
                .enumerate()
                .map(|(agent, a)| layout.encode(agent, a, cfg.world.v_max))
                .collect();
            trainer.replay.push(Transition {
                states: states.clone(),
                actions: encoded,
                relay_head_masks: masks_per_agent
                    .iter()
                    .enumerate()
                    .map(|(agent, m)| layout.relay_head_mask(agent, m))
                    .collect(),
                schedule_masks: masks_per_agent.iter().map(|m| m.schedule.clone()).collect(),
                reward: reward * cfg.reward.reward_scale,
                next_states: next_states.clone(),
                done: t == slots,
            });

            if trainer.replay.len() >= cfg.marl.warmup_slots.max(cfg.marl.batch)
                && t % cfg.marl.update_every as u64 == 0
            {
                let batch = trainer.replay.sample(cfg.marl.batch, &mut sample_rng)?;
                let batch: Vec<&Transition> = batch;
                // split borrow: sample returned refs into replay, clone out
                let owned: Vec<Transition> = batch.into_iter().cloned().collect();
                let refs: Vec<&Transition> = owned.iter().collect();
                update_step(&mut trainer.nets, &refs, &cfg)?;
            }

            if variant == Variant::Sta
                && trainer.predictor_replay.len() >= cfg.predictor.batch
                && t % cfg.predictor.update_every as u64 == 0
            {
                let batch: Vec<TrainSample> = (0..cfg.predictor.batch)
                    .map(|_| {
                        trainer.predictor_replay
                            [pred_rng.gen_range(0..trainer.predictor_replay.len())]
                        .clone()
                    })
                    .collect();
                train_predictor_step(&mut trainer.predictor, &batch, &mut trainer.predictor_opt)?;
            }
        }

        if let Some(trajs) = trajectories.as_mut() {
            for (agent, traj) in trajs.iter_mut().enumerate() {
                traj.push([env.uavs[agent].position[0], env.uavs[agent].position[1]]);
            }
        }

        let mean_delay =
            out.delays.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
        let delay_var = out
            .delays
            .iter()
            .map(|&d| (d as f64 - mean_delay).powi(2))
            .sum::<f64>()
            / n as f64;
        slot_records.push(SlotRecord {
            t,
            bs_bits: out.bs_bits,
            acc_bits,
            mean_delay,
            delay_var,
            contacts: out.contacts.iter().filter(|&&c| c).count() as u32,
            info_error: info_err,
            reward,
        });

        states = next_states;
        info_err = next_err;
    }

    // episode boundary: the full log is in hand, so any still-hidden truths
    // become available to the centralized predictor trainer
    if variant == Variant::Sta && train {
        while let Some((s, wins)) = pending_pred.pop_front() {
            let target = pred_targets
                .iter()
                .find(|(ts, _)| *ts == s)
                .map(|(_, v)| v.clone())
                .expect("target logged for every slot");
            trainer.push_predictor_sample(TrainSample { windows: wins, target_state: target });
        }
    }

    if train {
        trainer.episodes_done = trainer.episodes_done.max(episode + 1);
    }

    let count = slot_records.len() as f64;
    let metrics = EpisodeMetrics {
        episode,
        bs_bits_total: acc_bits,
        mean_delay: slot_records.iter().map(|r| r.mean_delay).sum::<f64>() / count,
        delay_var: slot_records.iter().map(|r| r.delay_var).sum::<f64>() / count,
        contacts_per_uav_slot: slot_records.iter().map(|r| r.contacts as f64).sum::<f64>()
            / (count * n as f64),
        info_error: slot_records.iter().map(|r| r.info_error).sum::<f64>() / count,
        reward_mean: slot_records.iter().map(|r| r.reward).sum::<f64>() / count,
    };
    Ok(EpisodeLog { metrics, slots: slot_records, trajectories })
}

/// Selects the discrete heads from a raw actor output, with masks applied
/// before selection; the velocity was already drawn.
fn select_discrete(
    raw: &[f64],
    velocity: [f64; 2],
    agent: usize,
    masks: &FeasibleMasks,
    explore: Exploration,
    rng: &mut impl Rng,
    layout: &ActionLayout,
) -> ActionRecord {
    let head_mask = layout.relay_head_mask(agent, masks);
    let relay_logits = &raw[layout.relay_range()];
    let relay_idx = if explore.epsilon > 0.0 && rng.gen_bool(explore.epsilon) {
        let allowed: Vec<usize> = (0..head_mask.len()).filter(|&i| head_mask[i]).collect();
        allowed[rng.gen_range(0..allowed.len())]
    } else {
        let mut best: Option<(usize, f64)> = None;
        for (i, (&v, &ok)) in relay_logits.iter().zip(&head_mask).enumerate() {
            if ok && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i).unwrap_or(0)
    };
    let relay_target = layout.relay_option(agent, relay_idx);
    let sched_logits = &raw[layout.schedule_range()];
    let mut gu_schedule = Vec::new();
    for (m, &logit) in sched_logits.iter().enumerate() {
        if !masks.schedule[m] {
            continue;
        }
        let pick = if explore.epsilon > 0.0 && rng.gen_bool(explore.epsilon) {
            rng.gen_bool(0.5)
        } else {
            logit > 0.0
        };
        if pick {
            gu_schedule.push(m);
        }
    }
    let beam_logits = &raw[layout.beam_range()];
    let beam_choice = if explore.epsilon > 0.0 && rng.gen_bool(explore.epsilon) {
        rng.gen_range(0..crate::marl::BEAM_CODEBOOK)
    } else if beam_logits[0] >= beam_logits[1] {
        0
    } else {
        1
    };
    ActionRecord { velocity, relay_target, gu_schedule, beam_choice }
}

/// Trains one (variant, seed) run for the given number of episodes.
pub fn train_run(
    cfg: &WorldConfig,
    variant: Variant,
    seed: u64,
    episodes: u64,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<(Trainer, Vec<EpisodeMetrics>), SimError> {
    let mut trainer = Trainer::new(cfg, variant, seed);
    let mut env = Env::new(cfg.clone(), seed);
    let mut all = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        let log = run_episode(variant, &mut env, &mut trainer, ep, true, false)?;
        on_episode(&log);
        all.push(log.metrics);
    }
    Ok((trainer, all))
}

/// Greedy rollouts with frozen parameters; episode indices are offset so the
/// starting conditions differ from training.
pub fn eval_run(
    trainer: &mut Trainer,
    episodes: u64,
    record_last_trajectory: bool,
) -> Result<(Vec<EpisodeMetrics>, Option<EpisodeLog>), SimError> {
    let cfg = trainer.cfg.clone();
    let variant = trainer.variant;
    let mut env = Env::new(cfg, trainer.seed);
    let mut metrics = Vec::with_capacity(episodes as usize);
    let mut last = None;
    for i in 0..episodes {
        let record = record_last_trajectory && i + 1 == episodes;
        let log = run_episode(
            variant,
            &mut env,
            trainer,
            1_000_000 + i,
            false,
            record,
        )?;
        metrics.push(log.metrics.clone());
        if record {
            last = Some(log);
        }
    }
    Ok((metrics, last))
}

/// Versioned, dimension-stamped parameter bundle.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub variant: String,
    pub seed: u64,
    pub episodes_done: u64,
    pub state_dim: usize,
    pub head_dim: usize,
    pub nets: Vec<AgentNets>,
    pub predictor: AttentionParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            variant: t.variant.as_str().to_string(),
            seed: t.seed,
            episodes_done: t.episodes_done,
            state_dim: t.cfg.state_dim(),
            head_dim: ActionLayout::new(&t.cfg).head_dim(),
            nets: t.nets.clone(),
            predictor: t.predictor.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        serde_json::to_string(self).map_err(|e| SimError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Checkpoint(e.to_string()))
    }

    /// Rebuilds a trainer, refusing dimension mismatches against the config.
    pub fn into_trainer(self, cfg: &WorldConfig) -> Result<Trainer, SimError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(SimError::Checkpoint(format!(
                "checkpoint version {} unsupported",
                self.version
            )));
        }
        if self.state_dim != cfg.state_dim()
            || self.head_dim != ActionLayout::new(cfg).head_dim()
        {
            return Err(SimError::Checkpoint(format!(
                "checkpoint dims (state {}, head {}) do not match config ({}, {})",
                self.state_dim,
                self.head_dim,
                cfg.state_dim(),
                ActionLayout::new(cfg).head_dim()
            )));
        }
        let p = &self.predictor;
        if p.n_uavs != cfg.world.n_uavs
            || p.tau0 != cfg.predictor.tau0
            || p.d_e != cfg.predictor.d_e
            || p.d_k != cfg.predictor.d_k
            || p.d_v != cfg.predictor.d_v
            || p.d_s != cfg.predictor.d_s
        {
            return Err(SimError::Checkpoint(
                "predictor dimensions do not match config".into(),
            ));
        }
        let variant: Variant = self.variant.parse()?;
        Ok(Trainer {
            cfg: cfg.clone(),
            variant,
            seed: self.seed,
            nets: self.nets,
            replay: ReplayBuffer::new(cfg.marl.replay_capacity),
            predictor: self.predictor,
            predictor_opt: Adam::new(cfg.predictor.lr),
            predictor_replay: Vec::new(),
            predictor_next: 0,
            episodes_done: self.episodes_done,
        })
    }
}

// re-export for callers that treat this as the episode API surface
pub use crate::marl::Variant as EpisodeVariant;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::desk_config;

    fn tiny_cfg() -> WorldConfig {
        let mut cfg = desk_config();
        cfg.run.slots_per_episode = 30;
        cfg.marl.hidden = 16;
        cfg.marl.batch = 8;
        cfg.marl.warmup_slots = 16;
        cfg.marl.update_every = 8;
        cfg.predictor.tau0 = 4;
        cfg.predictor.d_e = 8;
        cfg.predictor.d_k = 4;
        cfg.predictor.d_v = 4;
        cfg.predictor.d_s = 4;
        cfg.predictor.n_heads = 2;
        cfg.predictor.batch = 4;
        cfg.predictor.update_every = 8;
        cfg.predictor.warmup_episodes = 1;
        cfg
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let cfg = tiny_cfg();
        for variant in [Variant::Ideal, Variant::CommLimited, Variant::Sta] {
            let (_, m1) = train_run(&cfg, variant, 11, 3, |_| {}).unwrap();
            let (_, m2) = train_run(&cfg, variant, 11, 3, |_| {}).unwrap();
            assert_eq!(m1, m2, "variant {}", variant.as_str());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = tiny_cfg();
        let (_, m1) = train_run(&cfg, Variant::Ideal, 1, 2, |_| {}).unwrap();
        let (_, m2) = train_run(&cfg, Variant::Ideal, 2, 2, |_| {}).unwrap();
        assert_ne!(m1, m2);
    }

    #[test]
    fn ideal_state_is_ground_truth_every_slot() {
        let cfg = tiny_cfg();
        let mut trainer = Trainer::new(&cfg, Variant::Ideal, 5);
        let mut env = Env::new(cfg.clone(), 5);
        let log = run_episode(Variant::Ideal, &mut env, &mut trainer, 0, false, false).unwrap();
        for r in &log.slots {
            assert_eq!(r.info_error, 0.0);
        }
    }

    #[test]
    fn comm_limited_state_freezes_without_contact() {
        let mut cfg = tiny_cfg();
        // speed too low to ever reach the BS corner from the far side
        cfg.world.v_max = 0.5;
        let mut trainer = Trainer::new(&cfg, Variant::CommLimited, 6);
        let mut env = Env::new(cfg.clone(), 6);
        env.reset(0);
        // drag everyone far from the BS
        for u in env.uavs.iter_mut() {
            u.position = [-250.0, -250.0, cfg.world.altitude];
        }
        let initial: Vec<Vec<f64>> = env.raw_obs();
        env.table = crate::infocache::InfoTable::new(&initial);
        let mut windows: Vec<HistoryWindow> = env
            .normalized_obs()
            .into_iter()
            .map(|o| HistoryWindow::filled(&o, cfg.predictor.tau0))
            .collect();
        for t in 1..=10u64 {
            let (states, _) = build_states(Variant::CommLimited, &env, &windows, &trainer).unwrap();
            // other agents' entries stay at the initial report
            let norm = env.norm();
            let frozen = norm.normalize_obs(&[initial[1][0], initial[1][1], initial[1][2]]);
            assert_eq!(&states[0][3..6], frozen.as_slice(), "slot {t}");
            let idle = ActionRecord {
                velocity: [0.0, 0.0],
                relay_target: crate::marl::RelayTarget::None,
                gu_schedule: vec![],
                beam_choice: 1,
            };
            env.step(&vec![idle.clone(), idle.clone(), idle.clone()]).unwrap();
            let cached = env.normalized_cached_obs();
            for (w, o) in windows.iter_mut().zip(&cached) {
                w.push(o);
            }
        }
        let _ = &mut trainer;
    }

    #[test]
    fn sta_state_has_right_dimension_from_start() {
        let mut cfg = tiny_cfg();
        cfg.predictor.warmup_episodes = 0;
        let mut trainer = Trainer::new(&cfg, Variant::Sta, 7);
        trainer.episodes_done = 1; // predictor active immediately
        let mut env = Env::new(cfg.clone(), 7);
        let log = run_episode(Variant::Sta, &mut env, &mut trainer, 1, false, false).unwrap();
        assert_eq!(log.slots.len(), cfg.run.slots_per_episode);
    }

    #[test]
    fn unknown_variant_is_rejected_by_trainer_guard() {
        let cfg = tiny_cfg();
        let mut trainer = Trainer::new(&cfg, Variant::Ideal, 8);
        let mut env = Env::new(cfg.clone(), 8);
        let err = run_episode(Variant::Sta, &mut env, &mut trainer, 0, false, false);
        assert!(err.is_err());
    }

    #[test]
    fn checkpoint_round_trips_and_validates_dims() {
        let cfg = tiny_cfg();
        let (trainer, _) = train_run(&cfg, Variant::Sta, 9, 2, |_| {}).unwrap();
        let json = Checkpoint::from_trainer(&trainer).to_json().unwrap();
        let restored = Checkpoint::from_json(&json).unwrap().into_trainer(&cfg).unwrap();
        assert_eq!(restored.nets[0].actor, trainer.nets[0].actor);
        assert_eq!(restored.predictor, trainer.predictor);
        // dimension mismatch is refused
        let mut other = cfg.clone();
        other.world.n_uavs = 4;
        let reparsed = Checkpoint::from_json(&json).unwrap();
        assert!(reparsed.into_trainer(&other).is_err());
    }

    #[test]
    fn eval_is_repeatable() {
        let cfg = tiny_cfg();
        let (mut trainer, _) = train_run(&cfg, Variant::DelayTolerant, 10, 2, |_| {}).unwrap();
        let (e1, _) = eval_run(&mut trainer, 2, false).unwrap();
        let (e2, _) = eval_run(&mut trainer, 2, false).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn trajectories_recorded_when_asked() {
        let cfg = tiny_cfg();
        let mut trainer = Trainer::new(&cfg, Variant::Ideal, 12);
        let mut env = Env::new(cfg.clone(), 12);
        let log = run_episode(Variant::Ideal, &mut env, &mut trainer, 0, false, true).unwrap();
        let trajs = log.trajectories.unwrap();
        assert_eq!(trajs.len(), cfg.world.n_uavs);
        assert_eq!(trajs[0].len(), cfg.run.slots_per_episode);
    }
}
