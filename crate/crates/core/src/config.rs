//! Simulation configuration: all physical, channel, power, traffic, reward,
//! predictor, and learning constants, loaded from a TOML file with flat
//! sections. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::SimError;

/// Geometry, mobility, and slot-phase constants. Internal units are SI:
/// meters, seconds, joules, watts, bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    /// Number of UAVs (N).
    pub n_uavs: usize,
    /// Number of ground users (M).
    pub n_gus: usize,
    /// Antennas per UAV (F).
    pub n_antennas: usize,
    /// Half-width of the square service area, meters. The area spans
    /// [-w, w] x [-w, w].
    pub area_half_width: f64,
    /// BS x coordinate, meters.
    pub bs_x: f64,
    /// BS y coordinate, meters.
    pub bs_y: f64,
    /// BS antenna height, meters.
    pub bs_height: f64,
    /// Fixed UAV flight altitude H, meters.
    pub altitude: f64,
    /// Maximum flying speed, m/s.
    pub v_max: f64,
    /// Minimum inter-UAV safety distance, meters.
    pub d_min: f64,
    /// Energy-transfer phase length, seconds.
    pub t_e: f64,
    /// Uplink collection phase length, seconds.
    pub t_s: f64,
    /// Forward transmission phase length, seconds.
    pub t_r: f64,
    /// Horizontal radius within which a UAV can observe/schedule a GU, meters.
    pub coverage_radius: f64,
    /// Master seed for all derived random streams.
    pub rng_seed: u64,
}

/// Large-scale/small-scale channel constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Channel power gain at unit distance (dimensionless).
    pub omega0: f64,
    /// Receiver noise power sigma^2, watts.
    pub noise_power: f64,
    /// Rician K factor, dB.
    pub k_rice_db: f64,
    /// Interference-free MRT SNR (large-scale only) at or above which a
    /// U2U/U2B link is considered available.
    pub link_snr_threshold: f64,
}

/// Energy transfer and battery constants for GUs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// RF-to-DC energy conversion efficiency.
    pub eta_e: f64,
    /// GU battery capacity E_max, joules.
    pub e_max: f64,
    /// UAV transmit power budget p^e (energy beams and relay), watts.
    pub p_uav: f64,
    /// GU uplink transmit power p^s, watts.
    pub p_gu: f64,
    /// Initial battery level as a fraction of E_max.
    pub init_battery_frac: f64,
}

/// Sensing-data arrival process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    /// Per-GU data generated per slot is uniform on [0, q_max], bits.
    pub q_max: f64,
    /// Multiplier on the GU layout spread; 1.0 is the nominal deployment.
    pub gu_spacing_scale: f64,
}

/// Reward weighting constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    /// Weight on per-slot BS throughput.
    pub mu1: f64,
    /// Weight on the safety-compliance term.
    pub mu2: f64,
    /// Throughput weight inside the delay-penalized reward.
    pub omega1: f64,
    /// Delay weight inside the delay-penalized reward.
    pub omega2: f64,
    /// Scale applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
}

/// Spatio-temporal predictor dimensions and training constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    /// History window length tau_0, slots.
    pub tau0: usize,
    /// Encoder feature dimension d_e.
    pub d_e: usize,
    /// Query/key dimension d_k.
    pub d_k: usize,
    /// Value dimension d_v.
    pub d_v: usize,
    /// Graph node feature dimension d_s.
    pub d_s: usize,
    /// Attention head count.
    pub n_heads: usize,
    /// Keep the outer softmax on aggregated node features; identity otherwise.
    pub gat_outer_softmax: bool,
    /// Restrict graph edges to pairs within U2U range instead of full
    /// connectivity.
    pub distance_masked_edges: bool,
    /// Adam learning rate.
    pub lr: f64,
    /// Training batch size (window sets per step).
    pub batch: usize,
    /// Train once per this many slots.
    pub update_every: usize,
    /// Episodes before the corrected state replaces the cached snapshot.
    pub warmup_episodes: usize,
    /// Capacity of the (window set, revealed truth) replay store.
    pub buffer_capacity: usize,
}

/// Actor-critic learning constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarlSection {
    /// Hidden layer width for actors and critics (two hidden layers).
    pub hidden: usize,
    /// Actor Adam learning rate.
    pub actor_lr: f64,
    /// Critic Adam learning rate.
    pub critic_lr: f64,
    /// Reward discount factor rho_r.
    pub gamma: f64,
    /// Soft target-update coefficient.
    pub tau_soft: f64,
    /// Replay buffer capacity, transitions.
    pub replay_capacity: usize,
    /// Minibatch size.
    pub batch: usize,
    /// Run one update per this many slots.
    pub update_every: usize,
    /// Transitions collected before updates begin.
    pub warmup_slots: usize,
    /// Initial Gaussian exploration scale on velocity (fraction of v_max).
    pub noise_init: f64,
    /// Per-episode multiplicative decay of the velocity noise.
    pub noise_decay: f64,
    /// Floor for the velocity noise scale.
    pub noise_min: f64,
    /// Initial epsilon for the discrete heads.
    pub eps_init: f64,
    /// Per-episode multiplicative decay of epsilon.
    pub eps_decay: f64,
    /// Floor for epsilon.
    pub eps_min: f64,
}

/// Episode bookkeeping constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Slots per episode (T).
    pub slots_per_episode: usize,
    /// Buffer normalization constant for network inputs, bits.
    pub buffer_norm: f64,
}

/// Complete simulator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub world: WorldSection,
    pub channel: ChannelSection,
    pub power: PowerSection,
    pub traffic: TrafficSection,
    pub reward: RewardSection,
    pub predictor: PredictorSection,
    pub marl: MarlSection,
    pub run: RunSection,
}

impl WorldConfig {
    /// Parses a TOML configuration and validates the physical invariants.
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: WorldConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a configuration file from disk.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let w = &self.world;
        let positive = [
            ("area_half_width", w.area_half_width),
            ("altitude", w.altitude),
            ("v_max", w.v_max),
            ("d_min", w.d_min),
            ("t_e", w.t_e),
            ("t_s", w.t_s),
            ("t_r", w.t_r),
            ("coverage_radius", w.coverage_radius),
            ("omega0", self.channel.omega0),
            ("noise_power", self.channel.noise_power),
            ("link_snr_threshold", self.channel.link_snr_threshold),
            ("eta_e", self.power.eta_e),
            ("e_max", self.power.e_max),
            ("p_uav", self.power.p_uav),
            ("p_gu", self.power.p_gu),
            ("q_max", self.traffic.q_max),
            ("buffer_norm", self.run.buffer_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if w.n_uavs == 0 || w.n_gus == 0 || w.n_antennas == 0 {
            return Err(SimError::Config(
                "n_uavs, n_gus, n_antennas must be nonzero".into(),
            ));
        }
        if w.d_min >= 2.0 * w.area_half_width {
            return Err(SimError::Config(format!(
                "d_min {} must be smaller than the area width {}",
                w.d_min,
                2.0 * w.area_half_width
            )));
        }
        if w.t_e + w.t_s + w.t_r > 1.0 + 1e-12 {
            return Err(SimError::Config(format!(
                "phase lengths t_e+t_s+t_r = {} exceed the unit slot",
                w.t_e + w.t_s + w.t_r
            )));
        }
        if !(0.0..=1.0).contains(&self.power.init_battery_frac) {
            return Err(SimError::Config(
                "init_battery_frac must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.marl.gamma) {
            return Err(SimError::Config("gamma must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.marl.tau_soft) {
            return Err(SimError::Config("tau_soft must lie in [0, 1]".into()));
        }
        let p = &self.predictor;
        if p.tau0 < 2 || p.d_e == 0 || p.d_k == 0 || p.d_v == 0 || p.d_s == 0 || p.n_heads == 0 {
            return Err(SimError::Config(
                "predictor dims must be nonzero and tau0 >= 2".into(),
            ));
        }
        if self.reward.omega1 < 0.0 || self.reward.omega2 < 0.0 {
            return Err(SimError::Config(
                "omega1 and omega2 must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// BS position (the node with index 0 in formation matrices).
    pub fn bs_position(&self) -> [f64; 3] {
        [self.world.bs_x, self.world.bs_y, self.world.bs_height]
    }

    /// Rician K factor on a linear scale.
    pub fn k_rice(&self) -> f64 {
        10f64.powf(self.channel.k_rice_db / 10.0)
    }

    /// Observation dimension d_o: planar position plus buffered data.
    pub fn obs_dim(&self) -> usize {
        3
    }

    /// Global state dimension N * d_o.
    pub fn state_dim(&self) -> usize {
        self.world.n_uavs * self.obs_dim()
    }

    /// Radius within which the interference-free MRT SNR (large-scale only)
    /// meets `link_snr_threshold`. Beams concentrate the full power budget on
    /// one antenna-matched direction, so the received power at distance r is
    /// p_uav * F * omega0 / r^2.
    pub fn link_radius(&self) -> f64 {
        let num = self.power.p_uav * self.world.n_antennas as f64 * self.channel.omega0;
        (num / (self.channel.noise_power * self.channel.link_snr_threshold)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base_toml() -> String {
        r#"
[world]
n_uavs = 3
n_gus = 9
n_antennas = 4
area_half_width = 300.0
bs_x = 300.0
bs_y = 300.0
bs_height = 25.0
altitude = 100.0
v_max = 60.0
d_min = 40.0
t_e = 0.3
t_s = 0.4
t_r = 0.3
coverage_radius = 180.0
rng_seed = 1

[channel]
omega0 = 1e-3
noise_power = 1e-14
k_rice_db = 10.0
link_snr_threshold = 1e8

[power]
eta_e = 0.8
e_max = 2e-5
p_uav = 10.0
p_gu = 5e-6
init_battery_frac = 0.5

[traffic]
q_max = 4.0
gu_spacing_scale = 1.0

[reward]
mu1 = 1.0
mu2 = 0.1
omega1 = 1.0
omega2 = 0.05
reward_scale = 0.05

[predictor]
tau0 = 8
d_e = 32
d_k = 16
d_v = 16
d_s = 16
n_heads = 4
gat_outer_softmax = true
distance_masked_edges = false
lr = 1e-3
batch = 32
update_every = 8
warmup_episodes = 20
buffer_capacity = 20000

[marl]
hidden = 64
actor_lr = 1e-3
critic_lr = 1e-3
gamma = 0.95
tau_soft = 0.01
replay_capacity = 100000
batch = 64
update_every = 4
warmup_slots = 1000
noise_init = 0.5
noise_decay = 0.995
noise_min = 0.05
eps_init = 0.3
eps_decay = 0.99
eps_min = 0.02

[run]
slots_per_episode = 200
buffer_norm = 50.0
"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = WorldConfig::from_toml_str(&base_toml()).unwrap();
        assert_eq!(cfg.world.n_uavs, 3);
        assert_eq!(cfg.state_dim(), 9);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = base_toml().replace("[run]", "[run]\nbogus_key = 3\n");
        assert!(WorldConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn rejects_phase_overflow() {
        let text = base_toml().replace("t_e = 0.3", "t_e = 0.5").replace(
            "t_s = 0.4",
            "t_s = 0.5",
        );
        // 0.5 + 0.5 + 0.3 > 1
        assert!(WorldConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn rejects_nonpositive_constant() {
        let text = base_toml().replace("omega0 = 1e-3", "omega0 = 0.0");
        assert!(WorldConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn link_radius_matches_threshold() {
        let cfg = WorldConfig::from_toml_str(&base_toml()).unwrap();
        // p*F*omega0 / (r^2 * sigma^2) == threshold at r = link_radius
        let r = cfg.link_radius();
        let snr = cfg.power.p_uav * cfg.world.n_antennas as f64 * cfg.channel.omega0
            / (r * r * cfg.channel.noise_power);
        assert!((snr / cfg.channel.link_snr_threshold - 1.0).abs() < 1e-12);
    }
}
