//! Multi-agent deterministic actor-critic: decentralized actors with
//! centralized critics, shared replay, target networks, and the four
//! algorithm variants.
//!
//! Actions mix a continuous velocity with discrete heads (relay target, GU
//! schedule, beam choice). Discrete choices are executed greedily with
//! epsilon exploration and masked against infeasible options; critics see the
//! executed choice one-hot, while actor updates flow gradients through the
//! relaxed (softmax/sigmoid) head outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{soft_update as soft_update_matrix, Adam, Matrix, Tape, Var};
use crate::config::WorldConfig;
use crate::error::SimError;

/// Beam codebook: maximum-ratio toward the heuristic target, or an isotropic
/// broadcast.
pub const BEAM_CODEBOOK: usize = 2;

/// The four learning configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Complete, real-time global state; base reward.
    Ideal,
    /// Cached (stale) state; base reward.
    CommLimited,
    /// Cached state; delay-penalized reward.
    DelayTolerant,
    /// Predictor-corrected state; delay-penalized reward.
    Sta,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Ideal,
        Variant::CommLimited,
        Variant::DelayTolerant,
        Variant::Sta,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Ideal => "ideal",
            Variant::CommLimited => "comm_limited",
            Variant::DelayTolerant => "delay_tolerant",
            Variant::Sta => "sta",
        }
    }

    pub fn uses_delay_penalty(&self) -> bool {
        matches!(self, Variant::DelayTolerant | Variant::Sta)
    }
}

impl std::str::FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Variant::Ideal),
            "comm_limited" => Ok(Variant::CommLimited),
            "delay_tolerant" => Ok(Variant::DelayTolerant),
            "sta" => Ok(Variant::Sta),
            other => Err(SimError::Input(format!(
                "unknown variant '{other}' (expected ideal, comm_limited, delay_tolerant, sta)"
            ))),
        }
    }
}

/// Relay selection for the forward phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelayTarget {
    None,
    Bs,
    Uav(usize),
}

/// One agent's executed action for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    /// Commanded planar velocity, m/s.
    pub velocity: [f64; 2],
    pub relay_target: RelayTarget,
    /// GU indices this UAV proposes to collect from.
    pub gu_schedule: Vec<usize>,
    /// Beam codebook index.
    pub beam_choice: usize,
}

/// Feasible choices for the discrete heads, computed by the environment from
/// post-move geometry and the GUs' energy state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleMasks {
    /// Length n_uavs + 1: entry 0 gates the BS link, entry j >= 1 gates the
    /// link to UAV j-1. "No relay" is always allowed.
    pub relay: Vec<bool>,
    /// Length n_gus: GU can be proposed (covered and energy-feasible).
    pub schedule: Vec<bool>,
}

impl FeasibleMasks {
    pub fn all_allowed(n_uavs: usize, n_gus: usize) -> Self {
        FeasibleMasks { relay: vec![true; n_uavs + 1], schedule: vec![true; n_gus] }
    }
}

/// Action head layout inside the actor output vector.
#[derive(Debug, Clone, Copy)]
pub struct ActionLayout {
    pub n_uavs: usize,
    pub n_gus: usize,
}

impl ActionLayout {
    pub fn new(cfg: &WorldConfig) -> Self {
        ActionLayout { n_uavs: cfg.world.n_uavs, n_gus: cfg.world.n_gus }
    }

    /// Relay head width: none, BS, and each other UAV. Entries for the acting
    /// UAV itself are masked out at selection.
    pub fn relay_width(&self) -> usize {
        1 + 1 + self.n_uavs.saturating_sub(1)
    }

    pub fn head_dim(&self) -> usize {
        2 + self.relay_width() + self.n_gus + BEAM_CODEBOOK
    }

    pub fn velocity_range(&self) -> std::ops::Range<usize> {
        0..2
    }

    pub fn relay_range(&self) -> std::ops::Range<usize> {
        2..2 + self.relay_width()
    }

    pub fn schedule_range(&self) -> std::ops::Range<usize> {
        let s = 2 + self.relay_width();
        s..s + self.n_gus
    }

    pub fn beam_range(&self) -> std::ops::Range<usize> {
        let s = 2 + self.relay_width() + self.n_gus;
        s..s + BEAM_CODEBOOK
    }

    /// Maps a relay head index to a target for the given acting UAV.
    pub fn relay_option(&self, agent: usize, idx: usize) -> RelayTarget {
        match idx {
            0 => RelayTarget::None,
            1 => RelayTarget::Bs,
            j => {
                // peers in index order, skipping the agent itself
                let mut peers = (0..self.n_uavs).filter(|&u| u != agent);
                RelayTarget::Uav(peers.nth(j - 2).expect("relay index in range"))
            }
        }
    }

    /// Converts the per-option feasibility mask (BS at 0, UAV j at j+1) into
    /// head order for the acting agent.
    pub fn relay_head_mask(&self, agent: usize, masks: &FeasibleMasks) -> Vec<bool> {
        let mut head = Vec::with_capacity(self.relay_width());
        head.push(true); // "none"
        head.push(masks.relay[0]);
        for u in 0..self.n_uavs {
            if u != agent {
                head.push(masks.relay[u + 1]);
            }
        }
        head
    }

    /// Encoded action width seen by critics: normalized velocity, relay
    /// one-hot, schedule multi-hot, beam one-hot.
    pub fn encoded_dim(&self) -> usize {
        self.head_dim()
    }

    /// Hard encoding of an executed action.
    pub fn encode(&self, agent: usize, action: &ActionRecord, v_max: f64) -> Vec<f64> {
        let mut enc = vec![0.0; self.encoded_dim()];
        enc[0] = (action.velocity[0] / v_max).clamp(-1.0, 1.0);
        enc[1] = (action.velocity[1] / v_max).clamp(-1.0, 1.0);
        let relay_idx = match action.relay_target {
            RelayTarget::None => 0,
            RelayTarget::Bs => 1,
            RelayTarget::Uav(u) => {
                let mut peers = (0..self.n_uavs).filter(|&x| x != agent);
                2 + peers.position(|x| x == u).expect("peer exists")
            }
        };
        enc[self.relay_range().start + relay_idx] = 1.0;
        for &m in &action.gu_schedule {
            enc[self.schedule_range().start + m] = 1.0;
        }
        enc[self.beam_range().start + action.beam_choice] = 1.0;
        enc
    }
}

/// Fully connected network; hidden layers use ReLU, the output layer is
/// linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl Mlp {
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let scale = (2.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Matrix::randn(w[0], w[1], scale, rng));
            biases.push(Matrix::zeros(1, w[1]));
        }
        Mlp { weights, biases }
    }

    pub fn forward_plain(&self, input: &Matrix) -> Matrix {
        let mut h = input.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w).add_row_broadcast(b);
            if i < last {
                h = h.map(|x| x.max(0.0));
            }
        }
        h
    }

    /// Forward pass on the tape; parameters are inserted as leaves and their
    /// handles returned alongside the output.
    pub fn forward_tape(&self, tape: &mut Tape, input: Var) -> (Var, Vec<Var>) {
        let mut param_ids = Vec::new();
        let mut h = input;
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wid = tape.leaf(w.clone());
            let bid = tape.leaf(b.clone());
            param_ids.push(wid);
            param_ids.push(bid);
            h = tape.matmul(h, wid);
            h = tape.add_row_broadcast(h, bid);
            if i < last {
                h = tape.relu(h);
            }
        }
        (h, param_ids)
    }

    /// Parameters in the same order `forward_tape` registers them: weight
    /// then bias, layer by layer.
    pub fn mats_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn mats(&self) -> Vec<&Matrix> {
        self.weights
            .iter()
            .zip(self.biases.iter())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

/// Blends every target parameter toward its online counterpart.
pub fn soft_update(online: &Mlp, target: &mut Mlp, tau: f64) {
    for (o, t) in online.weights.iter().zip(target.weights.iter_mut()) {
        soft_update_matrix(o, t, tau);
    }
    for (o, t) in online.biases.iter().zip(target.biases.iter_mut()) {
        soft_update_matrix(o, t, tau);
    }
}

/// One agent's networks: online and target copies of the actor and critic,
/// with their optimizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl AgentNets {
    pub fn init(cfg: &WorldConfig, rng: &mut impl Rng) -> Self {
        let layout = ActionLayout::new(cfg);
        let s = cfg.state_dim();
        let h = cfg.marl.hidden;
        let actor = Mlp::init(&[s, h, h, layout.head_dim()], rng);
        let critic_in = s + cfg.world.n_uavs * layout.encoded_dim();
        let critic = Mlp::init(&[critic_in, h, h, 1], rng);
        AgentNets {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(cfg.marl.actor_lr),
            critic_opt: Adam::new(cfg.marl.critic_lr),
        }
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        soft_update(&self.actor, &mut self.target_actor, tau);
        soft_update(&self.critic, &mut self.target_critic, tau);
    }
}

/// One stored step of experience shared by all agents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    /// Per-agent state views at the decision slot.
    pub states: Vec<Vec<f64>>,
    /// Per-agent executed-action encodings.
    pub actions: Vec<Vec<f64>>,
    /// Per-agent relay head masks applied at selection time.
    pub relay_head_masks: Vec<Vec<bool>>,
    /// Per-agent schedule masks applied at selection time.
    pub schedule_masks: Vec<Vec<bool>>,
    /// Shared scaled reward.
    pub reward: f64,
    /// Per-agent state views after the slot.
    pub next_states: Vec<Vec<f64>>,
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, data: Vec::with_capacity(capacity.min(4096)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Samples exactly `batch` transitions with replacement; refuses to serve
    /// partial batches.
    pub fn sample<'a>(
        &'a self,
        batch: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<&'a Transition>, SimError> {
        if self.data.len() < batch {
            return Err(SimError::Input(format!(
                "replay holds {} transitions, need {batch}",
                self.data.len()
            )));
        }
        Ok((0..batch)
            .map(|_| &self.data[rng.gen_range(0..self.data.len())])
            .collect())
    }
}

/// Exploration knobs for one action selection.
#[derive(Debug, Clone, Copy)]
pub struct Exploration {
    /// Gaussian velocity noise scale as a fraction of v_max.
    pub noise_scale: f64,
    /// Discrete-head epsilon.
    pub epsilon: f64,
}

impl Exploration {
    pub fn greedy() -> Self {
        Exploration { noise_scale: 0.0, epsilon: 0.0 }
    }
}

fn argmax_masked(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if !ok {
            continue;
        }
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Deterministic policy output plus exploration: Gaussian noise on the
/// velocity, epsilon-greedy on the masked discrete heads.
pub fn actor_forward(
    state: &[f64],
    actor: &Mlp,
    agent: usize,
    masks: &FeasibleMasks,
    explore: Exploration,
    rng: &mut impl Rng,
    cfg: &WorldConfig,
) -> Result<ActionRecord, SimError> {
    let layout = ActionLayout::new(cfg);
    if state.len() != actor.weights[0].rows {
        return Err(SimError::Input(format!(
            "state dim {} does not match actor input {}",
            state.len(),
            actor.weights[0].rows
        )));
    }
    let out = actor.forward_plain(&Matrix::row_vec(state));
    let o = out.row(0);
    let v_max = cfg.world.v_max;

    let gauss = |rng: &mut dyn rand::RngCore| {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut velocity = [0.0; 2];
    for (i, v) in velocity.iter_mut().enumerate() {
        *v = o[i].tanh() * v_max + explore.noise_scale * v_max * gauss(rng);
    }

    let head_mask = layout.relay_head_mask(agent, masks);
    let relay_logits = &o[layout.relay_range()];
    let relay_idx = if explore.epsilon > 0.0 && rng.gen_bool(explore.epsilon) {
        let allowed: Vec<usize> = (0..head_mask.len()).filter(|&i| head_mask[i]).collect();
        allowed[rng.gen_range(0..allowed.len())]
    } else {
        argmax_masked(relay_logits, &head_mask).unwrap_or(0)
    };
    let relay_target = layout.relay_option(agent, relay_idx);

    let sched_logits = &o[layout.schedule_range()];
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

    let beam_logits = &o[layout.beam_range()];
    let beam_choice = if explore.epsilon > 0.0 && rng.gen_bool(explore.epsilon) {
        rng.gen_range(0..BEAM_CODEBOOK)
    } else {
        argmax_masked(beam_logits, &vec![true; BEAM_CODEBOOK]).unwrap_or(0)
    };

    Ok(ActionRecord { velocity, relay_target, gu_schedule, beam_choice })
}

/// TD target with no bootstrapping past terminal slots.
pub fn td_target(reward: f64, q_next: f64, gamma: f64, done: bool) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// Relaxed (differentiable) encoding of raw actor head outputs, without
/// masking. Used for target-actor actions.
fn relax_encode_plain(raw: &Matrix, layout: &ActionLayout) -> Matrix {
    let mut out = Matrix::zeros(raw.rows, layout.encoded_dim());
    for r in 0..raw.rows {
        let row = raw.row(r);
        let mut enc = vec![0.0; layout.encoded_dim()];
        enc[0] = row[0].tanh();
        enc[1] = row[1].tanh();
        let relay = crate::autodiff::row_softmax(&Matrix::row_vec(&row[layout.relay_range()]));
        enc[layout.relay_range()].copy_from_slice(&relay.data);
        for (j, &v) in row[layout.schedule_range()].iter().enumerate() {
            enc[layout.schedule_range().start + j] = 1.0 / (1.0 + (-v).exp());
        }
        let beam = crate::autodiff::row_softmax(&Matrix::row_vec(&row[layout.beam_range()]));
        enc[layout.beam_range()].copy_from_slice(&beam.data);
        out.data[r * out.cols..(r + 1) * out.cols].copy_from_slice(&enc);
    }
    out
}

/// Relaxed encoding on the tape with the recorded feasibility masks applied:
/// infeasible relay options get a large negative logit offset, infeasible
/// schedule entries are zeroed.
fn relax_encode_tape(
    tape: &mut Tape,
    raw: Var,
    layout: &ActionLayout,
    relay_head_masks: &[Vec<bool>],
    schedule_masks: &[Vec<bool>],
) -> Var {
    let rows = tape.value(raw).rows;
    let rw = layout.relay_width();

    let vel = tape.slice_cols_helper(raw, layout.velocity_range());
    let vel = tape.tanh(vel);

    let relay = tape.slice_cols_helper(raw, layout.relay_range());
    let mut offs = Matrix::zeros(rows, rw);
    for (r, mask) in relay_head_masks.iter().enumerate() {
        for (j, &ok) in mask.iter().enumerate() {
            if !ok {
                offs.set(r, j, -1e9);
            }
        }
    }
    let offs = tape.leaf(offs);
    let relay = tape.add(relay, offs);
    let relay = tape.row_softmax(relay);

    let sched = tape.slice_cols_helper(raw, layout.schedule_range());
    let sched = tape.sigmoid(sched);
    let mut gate = Matrix::zeros(rows, layout.n_gus);
    for (r, mask) in schedule_masks.iter().enumerate() {
        for (j, &ok) in mask.iter().enumerate() {
            gate.set(r, j, if ok { 1.0 } else { 0.0 });
        }
    }
    let gate = tape.leaf(gate);
    let sched = tape.mul(sched, gate);

    let beam = tape.slice_cols_helper(raw, layout.beam_range());
    let beam = tape.row_softmax(beam);

    tape.concat_cols(&[vel, relay, sched, beam])
}

impl Tape {
    /// Column slice built from transpose + row slice, used by the action
    /// encoding.
    pub fn slice_cols_helper(&mut self, a: Var, range: std::ops::Range<usize>) -> Var {
        let t = self.transpose(a);
        let s = self.slice_rows(t, range.start, range.end);
        self.transpose(s)
    }
}

/// Losses reported by one update step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Mean squared TD error of the critic on a prepared input batch, with
/// gradients for its parameters. `compute_grads = false` skips the backward
/// pass.
pub fn critic_loss(
    critic: &Mlp,
    inputs: &Matrix,
    targets: &[f64],
    compute_grads: bool,
) -> (f64, Vec<Option<Matrix>>) {
    let mut tape = Tape::new();
    let input = tape.leaf(inputs.clone());
    let (q, param_ids) = critic.forward_tape(&mut tape, input);
    let target = tape.leaf(Matrix { rows: targets.len(), cols: 1, data: targets.to_vec() });
    let loss = tape.mse(q, target);
    let value = tape.scalar(loss);
    if !compute_grads {
        return (value, Vec::new());
    }
    let grads = tape.backward(loss);
    (value, param_ids.iter().map(|&id| grads[id].clone()).collect())
}

/// Inputs for evaluating one agent's policy objective on a batch.
pub struct ActorObjectiveInputs<'a> {
    /// The acting agent's state views, B x S.
    pub states: &'a Matrix,
    /// Executed encodings of every agent (the acting agent's entry is
    /// replaced by the actor's relaxed output).
    pub all_actions: &'a [Matrix],
    pub agent: usize,
    pub relay_masks: &'a [Vec<bool>],
    pub schedule_masks: &'a [Vec<bool>],
}

/// Mean critic value of the actor's own relaxed action (others fixed), with
/// gradients for the actor parameters.
pub fn actor_objective(
    actor: &Mlp,
    critic: &Mlp,
    inputs: &ActorObjectiveInputs,
    layout: &ActionLayout,
    compute_grads: bool,
) -> (f64, Vec<Option<Matrix>>) {
    let mut tape = Tape::new();
    let s_in = tape.leaf(inputs.states.clone());
    let (raw, actor_ids) = actor.forward_tape(&mut tape, s_in);
    let own = relax_encode_tape(
        &mut tape,
        raw,
        layout,
        inputs.relay_masks,
        inputs.schedule_masks,
    );
    let mut parts: Vec<Var> = vec![tape.leaf(inputs.states.clone())];
    for (k, enc) in inputs.all_actions.iter().enumerate() {
        if k == inputs.agent {
            parts.push(own);
        } else {
            parts.push(tape.leaf(enc.clone()));
        }
    }
    let critic_in = tape.concat_cols(&parts);
    let (q, _) = critic.forward_tape(&mut tape, critic_in);
    let mean_q = tape.mean(q);
    let value = tape.scalar(mean_q);
    if !compute_grads {
        return (value, Vec::new());
    }
    let loss = tape.scale(mean_q, -1.0);
    let grads = tape.backward(loss);
    (value, actor_ids.iter().map(|&id| grads[id].clone()).collect())
}

fn stack_rows(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Matrix {
    let mut data = Vec::new();
    let mut count = 0;
    for r in rows {
        debug_assert_eq!(r.len(), cols);
        data.extend(r);
        count += 1;
    }
    Matrix { rows: count, cols, data }
}

/// One minibatch update of every agent's critic and actor, followed by a soft
/// target refresh.
pub fn update_step(
    nets: &mut [AgentNets],
    batch: &[&Transition],
    cfg: &WorldConfig,
) -> Result<UpdateStats, SimError> {
    if batch.is_empty() {
        return Err(SimError::Input("empty update batch".into()));
    }
    if batch.len() < cfg.marl.batch.min(batch.len()) {
        return Err(SimError::Input("batch below configured minimum".into()));
    }
    let layout = ActionLayout::new(cfg);
    let n_agents = nets.len();
    let b = batch.len();
    let state_dim = cfg.state_dim();

    // per-agent stacked views
    let states: Vec<Matrix> = (0..n_agents)
        .map(|k| stack_rows(batch.iter().map(|t| t.states[k].clone()), state_dim))
        .collect();
    let next_states: Vec<Matrix> = (0..n_agents)
        .map(|k| stack_rows(batch.iter().map(|t| t.next_states[k].clone()), state_dim))
        .collect();
    let actions: Vec<Matrix> = (0..n_agents)
        .map(|k| stack_rows(batch.iter().map(|t| t.actions[k].clone()), layout.encoded_dim()))
        .collect();

    // target joint action at the next state, per acting agent's own view
    let next_actions: Vec<Matrix> = (0..n_agents)
        .map(|k| {
            let raw = nets[k].target_actor.forward_plain(&next_states[k]);
            relax_encode_plain(&raw, &layout)
        })
        .collect();

    let mut critic_loss_acc = 0.0;
    let mut actor_obj_acc = 0.0;

    for n in 0..n_agents {
        // critic targets
        let mut next_in =
            Vec::with_capacity(b * (state_dim + n_agents * layout.encoded_dim()));
        for r in 0..b {
            next_in.extend_from_slice(next_states[n].row(r));
            for k in 0..n_agents {
                next_in.extend_from_slice(next_actions[k].row(r));
            }
        }
        let next_in = Matrix {
            rows: b,
            cols: state_dim + n_agents * layout.encoded_dim(),
            data: next_in,
        };
        let q_next = nets[n].target_critic.forward_plain(&next_in);
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(r, t)| td_target(t.reward, q_next.get(r, 0), cfg.marl.gamma, t.done))
            .collect();

        // critic update
        {
            let mut critic_in =
                Vec::with_capacity(b * (state_dim + n_agents * layout.encoded_dim()));
            for r in 0..b {
                critic_in.extend_from_slice(states[n].row(r));
                for k in 0..n_agents {
                    critic_in.extend_from_slice(actions[k].row(r));
                }
            }
            let critic_in = Matrix {
                rows: b,
                cols: state_dim + n_agents * layout.encoded_dim(),
                data: critic_in,
            };
            let (value, grads) = critic_loss(&nets[n].critic, &critic_in, &targets, true);
            critic_loss_acc += value;
            let mut mats = nets[n].critic.mats_mut();
            nets[n].critic_opt.step(&mut mats, &grads);
        }

        // actor update: ascend the critic's value w.r.t. this agent's action
        {
            let relay_masks: Vec<Vec<bool>> =
                batch.iter().map(|t| t.relay_head_masks[n].clone()).collect();
            let sched_masks: Vec<Vec<bool>> =
                batch.iter().map(|t| t.schedule_masks[n].clone()).collect();
            let inputs = ActorObjectiveInputs {
                states: &states[n],
                all_actions: &actions,
                agent: n,
                relay_masks: &relay_masks,
                schedule_masks: &sched_masks,
            };
            let (value, grads) =
                actor_objective(&nets[n].actor, &nets[n].critic, &inputs, &layout, true);
            actor_obj_acc += value;
            let mut mats = nets[n].actor.mats_mut();
            nets[n].actor_opt.step(&mut mats, &grads);
        }
    }

    for net in nets.iter_mut() {
        net.soft_update_targets(cfg.marl.tau_soft);
    }

    Ok(UpdateStats {
        critic_loss: critic_loss_acc / n_agents as f64,
        actor_objective: actor_obj_acc / n_agents as f64,
    })
}
