//! Canned configurations for tests and benches. Not part of the public API
//! surface proper, but exported so downstream test suites can reuse them.

use crate::config::*;

/// A small desk-scale configuration with physically consistent constants.
pub fn desk_config() -> WorldConfig {
    WorldConfig {
        world: WorldSection {
            n_uavs: 3,
            n_gus: 9,
            n_antennas: 4,
            area_half_width: 300.0,
            bs_x: 300.0,
            bs_y: 300.0,
            bs_height: 25.0,
            altitude: 100.0,
            v_max: 60.0,
            d_min: 40.0,
            t_e: 0.3,
            t_s: 0.4,
            t_r: 0.3,
            coverage_radius: 180.0,
            rng_seed: 1,
        },
        channel: ChannelSection {
            omega0: 1e-3,
            noise_power: 1e-14,
            k_rice_db: 10.0,
            link_snr_threshold: 1e8,
        },
        power: PowerSection {
            eta_e: 0.8,
            e_max: 2e-5,
            p_uav: 10.0,
            p_gu: 5e-6,
            init_battery_frac: 0.5,
        },
        traffic: TrafficSection { q_max: 4.0, gu_spacing_scale: 1.0 },
        reward: RewardSection {
            mu1: 1.0,
            mu2: 0.1,
            omega1: 1.0,
            omega2: 0.05,
            reward_scale: 0.05,
        },
        predictor: PredictorSection {
            tau0: 8,
            d_e: 32,
            d_k: 16,
            d_v: 16,
            d_s: 16,
            n_heads: 4,
            gat_outer_softmax: true,
            distance_masked_edges: false,
            lr: 1e-3,
            batch: 32,
            update_every: 8,
            warmup_episodes: 20,
            buffer_capacity: 20000,
        },
        marl: MarlSection {
            hidden: 64,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.95,
            tau_soft: 0.01,
            replay_capacity: 100_000,
            batch: 64,
            update_every: 4,
            warmup_slots: 1000,
            noise_init: 0.5,
            noise_decay: 0.995,
            noise_min: 0.05,
            eps_init: 0.3,
            eps_decay: 0.99,
            eps_min: 0.02,
        },
        run: RunSection { slots_per_episode: 200, buffer_norm: 50.0 },
    }
}

/// Tiny dimensions for gradient checks: 2 UAVs, tau0 = 3, feature dims 4.
pub fn toy_predictor_config() -> WorldConfig {
    let mut cfg = desk_config();
    cfg.world.n_uavs = 2;
    cfg.predictor.tau0 = 3;
    cfg.predictor.d_e = 4;
    cfg.predictor.d_k = 4;
    cfg.predictor.d_v = 4;
    cfg.predictor.d_s = 4;
    cfg.predictor.n_heads = 2;
    cfg
}
