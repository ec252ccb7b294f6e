//! Slot-level environment: composes kinematics, energy transfer, uplink
//! collection, relay forwarding, buffer dynamics, and the BS information
//! table into one deterministic stepper.
//!
//! Every stochastic draw comes from a stream keyed on (seed, episode, slot,
//! phase, link), so a step is a pure function of its inputs and the master
//! seed.

use rand::Rng;

use crate::channel::{
    isotropic_beam, link_available, mrt_beam, realize_channel, BeamRole, BeamVector,
    ChannelVector,
};
use crate::config::WorldConfig;
use crate::error::SimError;
use crate::infocache::InfoTable;
use crate::linkplan::{
    bs_throughput, gu_buffer_step, resolve_association, uav_flow_step, validate_formation,
    Association, FlowReport, Formation,
};
use crate::marl::{ActionRecord, FeasibleMasks, RelayTarget};
use crate::power::{battery_step, harvested_energy, tx_feasible};
use crate::rng::{stream, StreamKind};
use crate::world::{coverage_set, dist3, safety_report, step_kinematics, GuState, UavState};

const PHASE_ENERGY: u64 = 0;
const PHASE_UPLINK: u64 = 1;
const PHASE_RELAY: u64 = 2;

/// Normalization between raw observations and network inputs.
#[derive(Debug, Clone, Copy)]
pub struct ObsNorm {
    pub half_width: f64,
    pub buffer_norm: f64,
}

impl ObsNorm {
    pub fn new(cfg: &WorldConfig) -> Self {
        ObsNorm {
            half_width: cfg.world.area_half_width,
            buffer_norm: cfg.run.buffer_norm,
        }
    }

    pub fn normalize_obs(&self, obs: &[f64; 3]) -> Vec<f64> {
        vec![
            obs[0] / self.half_width,
            obs[1] / self.half_width,
            obs[2] / self.buffer_norm,
        ]
    }

    pub fn denormalize_obs(&self, v: &[f64]) -> [f64; 3] {
        [
            v[0] * self.half_width,
            v[1] * self.half_width,
            v[2] * self.buffer_norm,
        ]
    }
}

/// Everything the reward and metrics need from one slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub flow: FlowReport,
    pub association: Association,
    pub formation: Formation,
    pub safety: Vec<u32>,
    pub contacts: Vec<bool>,
    pub delays: Vec<u64>,
    pub bs_bits: f64,
    pub reward_base: f64,
    pub reward_delay: f64,
    pub generated_bits: f64,
    pub harvested: Vec<f64>,
}

/// The simulated network with its BS-side cache.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: WorldConfig,
    pub seed: u64,
    pub episode: u64,
    /// Slot counter within the episode; 0 right after reset.
    pub t: u64,
    pub uavs: Vec<UavState>,
    pub gus: Vec<GuState>,
    pub table: InfoTable,
    pub cum_generated: f64,
    pub cum_delivered: f64,
    norm: ObsNorm,
}

impl Env {
    /// Creates the environment and runs the first reset (episode 0). The GU
    /// layout is fixed per seed; UAV starting positions vary per episode.
    pub fn new(cfg: WorldConfig, seed: u64) -> Self {
        let norm = ObsNorm::new(&cfg);
        let gu_positions = Self::layout(&cfg, seed);
        let gus: Vec<GuState> = gu_positions
            .iter()
            .map(|p| GuState::new(p[0], p[1], &cfg))
            .collect();
        let mut env = Env {
            norm,
            cfg,
            seed,
            episode: 0,
            t: 0,
            uavs: Vec::new(),
            gus,
            table: InfoTable::new(&[]),
            cum_generated: 0.0,
            cum_delivered: 0.0,
        };
        env.reset(0);
        env
    }

    fn layout(cfg: &WorldConfig, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = stream(seed, StreamKind::Layout, [0; 4]);
        let w = cfg.world.area_half_width;
        let s = cfg.traffic.gu_spacing_scale;
        (0..cfg.world.n_gus)
            .map(|_| {
                let x: f64 = rng.gen_range(-w..w) * s;
                let y: f64 = rng.gen_range(-w..w) * s;
                [x.clamp(-w, w), y.clamp(-w, w), 0.0]
            })
            .collect()
    }

    /// Starts a fresh episode: random UAV positions, half-charged batteries,
    /// empty buffers, synchronized information table.
    pub fn reset(&mut self, episode: u64) {
        self.episode = episode;
        self.t = 0;
        let mut rng = stream(self.seed, StreamKind::Reset, [episode, 0, 0, 0]);
        let w = self.cfg.world.area_half_width;
        self.uavs = (0..self.cfg.world.n_uavs)
            .map(|_| UavState::new(rng.gen_range(-w..w), rng.gen_range(-w..w), &self.cfg))
            .collect();
        for gu in &mut self.gus {
            gu.battery_joules = self.cfg.power.init_battery_frac * self.cfg.power.e_max;
            gu.buffer_bits = 0.0;
        }
        self.cum_generated = 0.0;
        self.cum_delivered = 0.0;
        let initial: Vec<Vec<f64>> =
            self.uavs.iter().map(|u| u.observation().to_vec()).collect();
        self.table = InfoTable::new(&initial);
    }

    pub fn norm(&self) -> ObsNorm {
        self.norm
    }

    /// Raw observations of every UAV.
    pub fn raw_obs(&self) -> Vec<Vec<f64>> {
        self.uavs.iter().map(|u| u.observation().to_vec()).collect()
    }

    /// Normalized observations of every UAV.
    pub fn normalized_obs(&self) -> Vec<Vec<f64>> {
        self.uavs
            .iter()
            .map(|u| self.norm.normalize_obs(&u.observation()))
            .collect()
    }

    /// Normalized view of the BS cache.
    pub fn normalized_cached_obs(&self) -> Vec<Vec<f64>> {
        (0..self.table.n_uavs())
            .map(|n| {
                let o = &self.table.cached(n).obs;
                self.norm.normalize_obs(&[o[0], o[1], o[2]])
            })
            .collect()
    }

    pub fn bs_node_position(&self) -> [f64; 3] {
        self.cfg.bs_position()
    }

    /// Node positions with the BS first, matching formation column order.
    pub fn node_positions(&self) -> Vec<[f64; 3]> {
        let mut v = Vec::with_capacity(self.uavs.len() + 1);
        v.push(self.bs_node_position());
        v.extend(self.uavs.iter().map(|u| u.position));
        v
    }

    /// Tentative post-move positions for the given velocities, used to build
    /// feasibility masks before the step executes.
    pub fn peek_moved(&self, velocities: &[[f64; 2]]) -> Result<Vec<UavState>, SimError> {
        step_kinematics(&self.uavs, velocities, &self.cfg)
    }

    /// Discrete-head masks for one agent at the given post-move geometry:
    /// relay entries gate on link availability, schedule entries on coverage.
    pub fn masks_at(&self, agent: usize, moved: &[UavState]) -> FeasibleMasks {
        let bs = self.bs_node_position();
        let mut relay = Vec::with_capacity(self.uavs.len() + 1);
        relay.push(link_available(&moved[agent].position, &bs, &self.cfg));
        for (u, peer) in moved.iter().enumerate() {
            relay.push(
                u != agent && link_available(&moved[agent].position, &peer.position, &self.cfg),
            );
        }
        let covered = coverage_set(&moved[agent], &self.gus, &self.cfg);
        let mut schedule = vec![false; self.gus.len()];
        for m in covered {
            schedule[m] = true;
        }
        FeasibleMasks { relay, schedule }
    }

    fn channel_for(
        &self,
        t: u64,
        phase: u64,
        link: u64,
        a: &[f64; 3],
        b: &[f64; 3],
    ) -> Result<ChannelVector, SimError> {
        let mut rng = stream(
            self.seed,
            StreamKind::Channel,
            [self.episode, t, phase, link],
        );
        realize_channel(a, b, &mut rng, &self.cfg)
    }

    /// Runs one full slot with the given actions. Infeasible discrete choices
    /// (out-of-range links, uncovered or energy-infeasible GUs, self-loops)
    /// are dropped rather than rejected, keeping rollouts total.
    pub fn step(&mut self, actions: &[ActionRecord]) -> Result<SlotOutcome, SimError> {
        let n_uavs = self.cfg.world.n_uavs;
        let n_gus = self.cfg.world.n_gus;
        if actions.len() != n_uavs {
            return Err(SimError::Input(format!(
                "{} actions for {} UAVs",
                actions.len(),
                n_uavs
            )));
        }
        let t = self.t + 1;
        let prev = self.uavs.clone();

        // movement window
        let velocities: Vec<[f64; 2]> = actions.iter().map(|a| a.velocity).collect();
        let moved = step_kinematics(&self.uavs, &velocities, &self.cfg)?;

        // energy transfer phase
        let mut energy_channels: Vec<Vec<ChannelVector>> = Vec::with_capacity(n_gus);
        for m in 0..n_gus {
            let mut per_uav = Vec::with_capacity(n_uavs);
            for n in 0..n_uavs {
                per_uav.push(self.channel_for(
                    t,
                    PHASE_ENERGY,
                    (n * n_gus + m) as u64,
                    &moved[n].position,
                    &self.gus[m].position,
                )?);
            }
            energy_channels.push(per_uav);
        }
        let energy_beams: Vec<BeamVector> = (0..n_uavs)
            .map(|n| self.energy_beam(n, &moved[n], &actions[n], &energy_channels))
            .collect();
        let harvested: Vec<f64> = (0..n_gus)
            .map(|m| {
                let chans: Vec<ChannelVector> =
                    (0..n_uavs).map(|n| energy_channels[m][n].clone()).collect();
                harvested_energy(&chans, &energy_beams, &self.cfg)
            })
            .collect();
        let feasible: Vec<bool> = (0..n_gus)
            .map(|m| tx_feasible(&self.gus[m], harvested[m], &self.cfg).0)
            .collect();

        // uplink collection phase
        let proposals: Vec<Vec<usize>> =
            actions.iter().map(|a| a.gu_schedule.clone()).collect();
        let gu_positions: Vec<[f64; 3]> = self.gus.iter().map(|g| g.position).collect();
        let uav_positions: Vec<[f64; 3]> = moved.iter().map(|u| u.position).collect();
        let assoc = resolve_association(
            &proposals,
            &gu_positions,
            &uav_positions,
            &feasible,
            &self.cfg,
        );
        let mut uplink_channels: Vec<Vec<ChannelVector>> = Vec::with_capacity(n_gus);
        for m in 0..n_gus {
            let mut per_uav = Vec::with_capacity(n_uavs);
            for n in 0..n_uavs {
                per_uav.push(self.channel_for(
                    t,
                    PHASE_UPLINK,
                    (m * n_uavs + n) as u64,
                    &self.gus[m].position,
                    &moved[n].position,
                )?);
            }
            uplink_channels.push(per_uav);
        }
        let receive_beams: Vec<BeamVector> = (0..n_uavs)
            .map(|n| self.receive_beam(n, &moved[n], &assoc, &uplink_channels))
            .collect();
        let gu_powers = vec![self.cfg.power.p_gu; n_gus];
        let sinr = crate::channel::uplink_sinr(
            &assoc,
            &uplink_channels,
            &gu_powers,
            &receive_beams,
            self.cfg.channel.noise_power,
        );
        let uplink_raw: Vec<(usize, usize, f64)> = sinr
            .iter()
            .map(|&(m, n, g)| {
                (m, n, crate::channel::uplink_volume(g, true, self.cfg.world.t_s))
            })
            .collect();

        // forward transmission phase
        let node_positions: Vec<[f64; 3]> = std::iter::once(self.bs_node_position())
            .chain(uav_positions.iter().copied())
            .collect();
        let mut phi = Formation::new(n_uavs);
        for (n, a) in actions.iter().enumerate() {
            let col = match a.relay_target {
                RelayTarget::None => None,
                RelayTarget::Bs => Some(0),
                RelayTarget::Uav(u) if u != n && u < n_uavs => Some(u + 1),
                RelayTarget::Uav(_) => None,
            };
            // exactly co-located nodes have no usable link
            let col = col.filter(|&c| dist3(&moved[n].position, &node_positions[c]) > 0.0);
            phi.set_target(n, col);
        }
        let phi = validate_formation(&phi, &node_positions, &self.cfg)?;
        // only active links carry signal or interference, so only they need
        // realizations; the rest keep zero placeholders
        let zero = ChannelVector::zeros(self.cfg.world.n_antennas);
        let mut relay_channels: Vec<Vec<ChannelVector>> =
            vec![vec![zero; n_uavs + 1]; n_uavs];
        for n in 0..n_uavs {
            if let Some(col) = phi.target(n) {
                relay_channels[n][col] = self.channel_for(
                    t,
                    PHASE_RELAY,
                    (n * (n_uavs + 1) + col) as u64,
                    &moved[n].position,
                    &node_positions[col],
                )?;
            }
        }
        let relay_beams: Vec<BeamVector> = (0..n_uavs)
            .map(|n| match phi.target(n) {
                Some(col) => mrt_beam(&relay_channels[n][col], 1.0)
                    .map(|mut b| {
                        b.role = BeamRole::Relay;
                        b
                    })
                    .unwrap_or_else(|_| isotropic_beam(self.cfg.world.n_antennas, 1.0)),
                None => isotropic_beam(self.cfg.world.n_antennas, 1.0),
            })
            .collect();
        let relay_powers = vec![self.cfg.power.p_uav; n_uavs];
        let relay_out = crate::channel::relay_sinr_and_volume(
            &phi,
            &relay_channels,
            &relay_powers,
            &relay_beams,
            self.cfg.channel.noise_power,
            self.cfg.world.t_r,
        )?;
        let relay_raw: Vec<(usize, usize, f64)> =
            relay_out.iter().map(|&(n, col, _, bits)| (n, col, bits)).collect();

        // buffer dynamics
        let uav_buffers: Vec<f64> = self.uavs.iter().map(|u| u.buffer_bits).collect();
        let gu_buffers: Vec<f64> = self.gus.iter().map(|g| g.buffer_bits).collect();
        let (flow, next_uav_buffers) =
            uav_flow_step(&uav_buffers, &gu_buffers, &uplink_raw, &relay_raw);

        // batteries and GU buffers
        let mut traffic_rng = stream(self.seed, StreamKind::Traffic, [self.episode, t, 0, 0]);
        let mut generated = 0.0;
        for m in 0..n_gus {
            let scheduled = assoc.uav_of(m).is_some();
            let consumed = if scheduled {
                self.cfg.power.p_gu * self.cfg.world.t_s
            } else {
                0.0
            };
            let battery = battery_step(&self.gus[m], harvested[m], consumed, &self.cfg)?;
            let q: f64 = traffic_rng.gen_range(0.0..self.cfg.traffic.q_max);
            let buffer = gu_buffer_step(self.gus[m].buffer_bits, flow.gu_uplink_bits[m], q);
            generated += q;
            self.gus[m].battery_joules = battery;
            self.gus[m].buffer_bits = buffer;
        }
        self.cum_generated += generated;

        // commit UAV state
        for (n, u) in self.uavs.iter_mut().enumerate() {
            u.position = moved[n].position;
            u.buffer_bits = next_uav_buffers[n];
        }

        // contacts and the BS cache
        let contacts: Vec<bool> = (0..n_uavs).map(|n| phi.targets_bs(n)).collect();
        let fresh: Vec<Vec<f64>> = self.raw_obs();
        self.table.advance(t, &contacts, &fresh)?;
        let delays = self.table.delays().to_vec();

        // safety and rewards
        let safety = safety_report(&self.uavs, &prev, &self.cfg)?;
        let bs_bits = bs_throughput(&flow);
        self.cum_delivered += bs_bits;
        let reward_base = crate::infocache::reward_base(&flow, &safety, &self.cfg);
        let reward_delay =
            crate::infocache::reward_delay_penalized(&flow, &safety, &delays, &self.cfg);

        self.t = t;
        Ok(SlotOutcome {
            flow,
            association: assoc,
            formation: phi,
            safety,
            contacts,
            delays,
            bs_bits,
            reward_base,
            reward_delay,
            generated_bits: generated,
            harvested,
        })
    }

    /// Energy-phase beam per the codebook: index 0 aims maximum-ratio at the
    /// lowest-battery covered GU, index 1 broadcasts isotropically.
    fn energy_beam(
        &self,
        n: usize,
        moved: &UavState,
        action: &ActionRecord,
        energy_channels: &[Vec<ChannelVector>],
    ) -> BeamVector {
        let budget = self.cfg.power.p_uav;
        if action.beam_choice == 1 {
            return isotropic_beam(self.cfg.world.n_antennas, budget);
        }
        let covered = coverage_set(moved, &self.gus, &self.cfg);
        let target = covered.into_iter().min_by(|&a, &b| {
            self.gus[a]
                .battery_joules
                .partial_cmp(&self.gus[b].battery_joules)
                .unwrap()
                .then(a.cmp(&b))
        });
        match target {
            Some(m) => mrt_beam(&energy_channels[m][n], budget)
                .unwrap_or_else(|_| isotropic_beam(self.cfg.world.n_antennas, budget)),
            None => isotropic_beam(self.cfg.world.n_antennas, budget),
        }
    }

    /// Receive beam matched to the scheduled GU with the largest large-scale
    /// gain; isotropic when idle. Unit norm either way.
    fn receive_beam(
        &self,
        n: usize,
        moved: &UavState,
        assoc: &Association,
        uplink_channels: &[Vec<ChannelVector>],
    ) -> BeamVector {
        let mine: Vec<usize> = assoc
            .scheduled_pairs()
            .filter(|&(_, un)| un == n)
            .map(|(m, _)| m)
            .collect();
        let closest = mine.into_iter().min_by(|&a, &b| {
            let da = dist3(&moved.position, &self.gus[a].position);
            let db = dist3(&moved.position, &self.gus[b].position);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        match closest {
            Some(m) => {
                let mut b = mrt_beam(&uplink_channels[m][n], 1.0)
                    .unwrap_or_else(|_| isotropic_beam(self.cfg.world.n_antennas, 1.0));
                b.role = BeamRole::Receive;
                b
            }
            None => {
                let mut b = isotropic_beam(self.cfg.world.n_antennas, 1.0);
                b.role = BeamRole::Receive;
                b
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::desk_config;

    fn random_action(
        env: &Env,
        agent: usize,
        rng: &mut impl Rng,
    ) -> ActionRecord {
        let n = env.cfg.world.n_uavs;
        let m = env.cfg.world.n_gus;
        let v = env.cfg.world.v_max;
        let relay = match rng.gen_range(0..n + 2) {
            0 => RelayTarget::None,
            1 => RelayTarget::Bs,
            k => RelayTarget::Uav((k - 2 + agent) % n), // may include self
        };
        ActionRecord {
            velocity: [rng.gen_range(-v..v), rng.gen_range(-v..v)],
            relay_target: relay,
            gu_schedule: (0..m).filter(|_| rng.gen_bool(0.4)).collect(),
            beam_choice: rng.gen_range(0..2),
        }
    }

    #[test]
    fn steps_are_deterministic_per_seed() {
        let cfg = desk_config();
        let mut a = Env::new(cfg.clone(), 42);
        let mut b = Env::new(cfg, 42);
        let mut rng1 = stream(5, StreamKind::Exploration, [0; 4]);
        let mut rng2 = stream(5, StreamKind::Exploration, [0; 4]);
        for _ in 0..20 {
            let acts1: Vec<ActionRecord> =
                (0..3).map(|n| random_action(&a, n, &mut rng1)).collect();
            let acts2: Vec<ActionRecord> =
                (0..3).map(|n| random_action(&b, n, &mut rng2)).collect();
            assert_eq!(acts1, acts2);
            let o1 = a.step(&acts1).unwrap();
            let o2 = b.step(&acts2).unwrap();
            assert_eq!(o1.bs_bits, o2.bs_bits);
            assert_eq!(o1.delays, o2.delays);
            assert_eq!(a.raw_obs(), b.raw_obs());
        }
    }

    #[test]
    fn random_rollout_keeps_invariants() {
        let cfg = desk_config();
        let mut env = Env::new(cfg.clone(), 7);
        let mut rng = stream(9, StreamKind::Exploration, [0; 4]);
        for ep in 0..3u64 {
            env.reset(ep);
            for _ in 0..300 {
                let acts: Vec<ActionRecord> =
                    (0..3).map(|n| random_action(&env, n, &mut rng)).collect();
                let out = env.step(&acts).unwrap();
                for gu in &env.gus {
                    assert!(gu.battery_joules >= 0.0 && gu.battery_joules <= cfg.power.e_max);
                    assert!(gu.buffer_bits >= 0.0);
                }
                for u in &env.uavs {
                    assert!(u.buffer_bits >= 0.0);
                    assert!(u.position[0].abs() <= cfg.world.area_half_width);
                    assert!(u.position[1].abs() <= cfg.world.area_half_width);
                }
                for row in out.association.matrix() {
                    assert!(row.iter().map(|&x| x as u32).sum::<u32>() <= 1);
                }
                for row in out.formation.matrix() {
                    assert!(row.iter().map(|&x| x as u32).sum::<u32>() <= 1);
                }
                assert!(env.cum_delivered <= env.cum_generated + 1e-9);
            }
        }
    }

    #[test]
    fn contact_requires_bs_range() {
        let mut cfg = desk_config();
        cfg.world.v_max = 1.0; // keep UAVs where we place them
        let mut env = Env::new(cfg.clone(), 3);
        // place UAV 0 far from the BS corner
        env.uavs[0].position = [-280.0, -280.0, cfg.world.altitude];
        let idle = ActionRecord {
            velocity: [0.0, 0.0],
            relay_target: RelayTarget::Bs,
            gu_schedule: vec![],
            beam_choice: 1,
        };
        let acts = vec![idle.clone(), idle.clone(), idle.clone()];
        let out = env.step(&acts).unwrap();
        assert!(!out.contacts[0]);
        // and a UAV parked on top of the BS corner reaches it
        env.uavs[1].position = [cfg.world.bs_x - 10.0, cfg.world.bs_y - 10.0, cfg.world.altitude];
        let out = env.step(&acts).unwrap();
        assert!(out.contacts[1]);
        assert_eq!(out.delays[1], 0);
        assert!(out.delays[0] >= 2);
    }

    #[test]
    fn masks_reflect_geometry() {
        let mut cfg = desk_config();
        cfg.world.v_max = 1.0;
        let mut env = Env::new(cfg.clone(), 11);
        env.uavs[0].position = [cfg.world.bs_x - 5.0, cfg.world.bs_y - 5.0, cfg.world.altitude];
        env.uavs[1].position = [0.0, 0.0, cfg.world.altitude];
        env.uavs[2].position = [-290.0, -290.0, cfg.world.altitude];
        let moved = env.peek_moved(&[[0.0, 0.0]; 3]).unwrap();
        let m0 = env.masks_at(0, &moved);
        assert!(m0.relay[0]); // BS in range
        let m2 = env.masks_at(2, &moved);
        assert!(!m2.relay[0]); // far corner cannot reach the BS
        assert!(!m0.relay[1]); // never the agent itself
    }

    #[test]
    fn relayed_bits_reach_bs_next_slot() {
        let mut cfg = desk_config();
        cfg.world.v_max = 1e-6;
        cfg.traffic.q_max = 1e-12; // no fresh data muddying the water
        let mut env = Env::new(cfg.clone(), 13);
        env.uavs[0].position = [cfg.world.bs_x - 50.0, cfg.world.bs_y - 50.0, cfg.world.altitude];
        env.uavs[1].position = [cfg.world.bs_x - 150.0, cfg.world.bs_y - 150.0, cfg.world.altitude];
        env.uavs[2].position = [-250.0, 0.0, cfg.world.altitude];
        env.uavs[1].buffer_bits = 5.0;
        let mk = |relay| ActionRecord {
            velocity: [0.0, 0.0],
            relay_target: relay,
            gu_schedule: vec![],
            beam_choice: 1,
        };
        // UAV 1 relays into UAV 0; UAV 0 has nothing to send yet
        let acts = vec![mk(RelayTarget::None), mk(RelayTarget::Uav(0)), mk(RelayTarget::None)];
        let out = env.step(&acts).unwrap();
        assert_eq!(out.bs_bits, 0.0);
        assert!(env.uavs[0].buffer_bits > 0.0);
        // next slot UAV 0 forwards to the BS
        let acts = vec![mk(RelayTarget::Bs), mk(RelayTarget::None), mk(RelayTarget::None)];
        let out = env.step(&acts).unwrap();
        assert!(out.bs_bits > 0.0);
    }
}
