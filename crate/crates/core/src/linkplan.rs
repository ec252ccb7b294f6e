//! Feasible association/formation matrices, conflict resolution, buffer
//! dynamics, and BS throughput accounting.
//!
//! Transfers are capped at the sender's start-of-slot buffer so that data is
//! conserved end to end: the BS can never accumulate more bits than the GUs
//! generated.

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::SimError;
use crate::world::dist3;

/// GU-to-UAV association for one slot: an M x N binary matrix in which each
/// GU row has at most one set entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    n_gus: usize,
    n_uavs: usize,
    assigned: Vec<Option<usize>>,
}

impl Association {
    pub fn empty(n_gus: usize, n_uavs: usize) -> Self {
        Association { n_gus, n_uavs, assigned: vec![None; n_gus] }
    }

    pub fn from_pairs(
        n_gus: usize,
        n_uavs: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Self, SimError> {
        let mut a = Self::empty(n_gus, n_uavs);
        for &(m, n) in pairs {
            if m >= n_gus || n >= n_uavs {
                return Err(SimError::Input(format!("pair ({m},{n}) out of range")));
            }
            if a.assigned[m].is_some() {
                return Err(SimError::Constraint(format!(
                    "GU {m} associated with more than one UAV"
                )));
            }
            a.assigned[m] = Some(n);
        }
        Ok(a)
    }

    pub fn n_gus(&self) -> usize {
        self.n_gus
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn uav_of(&self, m: usize) -> Option<usize> {
        self.assigned[m]
    }

    pub fn scheduled_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assigned
            .iter()
            .enumerate()
            .filter_map(|(m, n)| n.map(|n| (m, n)))
    }

    /// Dense matrix view; row sums are at most one by construction.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let mut mat = vec![vec![0u8; self.n_uavs]; self.n_gus];
        for (m, n) in self.scheduled_pairs() {
            mat[m][n] = 1;
        }
        mat
    }
}

/// UAV relay formation for one slot: an N x (N+1) binary matrix whose column
/// zero is the BS and whose row sums are at most one. Self-loops are invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formation {
    n_uavs: usize,
    target: Vec<Option<usize>>,
}

impl Formation {
    pub fn new(n_uavs: usize) -> Self {
        Formation { n_uavs, target: vec![None; n_uavs] }
    }

    /// Builds from a dense matrix, enforcing shape and row-sum constraints.
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<Self, SimError> {
        let n = rows.len();
        let mut f = Formation::new(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n + 1 {
                return Err(SimError::Input(format!(
                    "formation row {i} has {} columns, expected {}",
                    row.len(),
                    n + 1
                )));
            }
            let set: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(j, _)| j)
                .collect();
            match set.as_slice() {
                [] => {}
                [col] => f.set_target(i, Some(*col)),
                _ => {
                    return Err(SimError::Constraint(format!(
                        "formation row {i} selects {} links",
                        set.len()
                    )))
                }
            }
        }
        f.check()?;
        Ok(f)
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    /// Target column of UAV `n`: 0 is the BS, j >= 1 is UAV j-1.
    pub fn target(&self, n: usize) -> Option<usize> {
        self.target[n]
    }

    pub fn set_target(&mut self, n: usize, col: Option<usize>) {
        self.target[n] = col;
    }

    pub fn check(&self) -> Result<(), SimError> {
        for (n, t) in self.target.iter().enumerate() {
            if let Some(col) = t {
                if *col > self.n_uavs {
                    return Err(SimError::Input(format!(
                        "formation row {n} targets column {col}, max {}",
                        self.n_uavs
                    )));
                }
                if *col == n + 1 {
                    return Err(SimError::Constraint(format!("formation row {n} is a self-loop")));
                }
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let mut mat = vec![vec![0u8; self.n_uavs + 1]; self.n_uavs];
        for (n, t) in self.target.iter().enumerate() {
            if let Some(col) = t {
                mat[n][*col] = 1;
            }
        }
        mat
    }

    /// True when the link to the BS is selected.
    pub fn targets_bs(&self, n: usize) -> bool {
        self.target[n] == Some(0)
    }
}

/// Realized data movement for one slot, after sender-buffer capping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    /// Effective uplink bits leaving each GU.
    pub gu_uplink_bits: Vec<f64>,
    /// Total bits received by each UAV (uplink plus inbound relays).
    pub uav_received: Vec<f64>,
    /// Effective bits sent on each UAV's outgoing link.
    pub uav_sent: Vec<f64>,
    /// Effective bits delivered to the BS per UAV.
    pub bs_delivered: Vec<f64>,
}

/// Resolves per-UAV scheduling proposals into a feasible association. A GU
/// proposed by several UAVs goes to the one with the largest large-scale
/// channel gain (ties to the lowest UAV index); proposals outside coverage or
/// failing the GU's energy gate are dropped.
pub fn resolve_association(
    proposals: &[Vec<usize>],
    gu_positions: &[[f64; 3]],
    uav_positions: &[[f64; 3]],
    gu_feasible: &[bool],
    cfg: &WorldConfig,
) -> Association {
    let n_uavs = proposals.len();
    let n_gus = gu_positions.len();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; n_gus];
    for (n, set) in proposals.iter().enumerate() {
        for &m in set {
            if m >= n_gus || !gu_feasible[m] {
                continue;
            }
            let d = dist3(&uav_positions[n], &gu_positions[m]);
            if crate::world::dist_horizontal(&uav_positions[n], &gu_positions[m])
                > cfg.world.coverage_radius
            {
                continue;
            }
            let gain = cfg.channel.omega0 / (d * d);
            let better = match best[m] {
                None => true,
                Some((bn, bg)) => gain > bg || (gain == bg && n < bn),
            };
            if better {
                best[m] = Some((n, gain));
            }
        }
    }
    let mut assoc = Association::empty(n_gus, n_uavs);
    for (m, pick) in best.into_iter().enumerate() {
        if let Some((n, _)) = pick {
            assoc.assigned[m] = Some(n);
        }
    }
    assoc
}

/// Clears formation entries whose links are unavailable at the given
/// positions, and clears self-loops. `node_positions` holds the BS at index 0
/// followed by the UAVs.
pub fn validate_formation(
    phi: &Formation,
    node_positions: &[[f64; 3]],
    cfg: &WorldConfig,
) -> Result<Formation, SimError> {
    if node_positions.len() != phi.n_uavs() + 1 {
        return Err(SimError::Input(format!(
            "expected {} node positions, got {}",
            phi.n_uavs() + 1,
            node_positions.len()
        )));
    }
    let mut out = Formation::new(phi.n_uavs());
    for n in 0..phi.n_uavs() {
        let Some(col) = phi.target(n) else { continue };
        if col > phi.n_uavs() || col == n + 1 {
            continue;
        }
        let from = &node_positions[n + 1];
        let to = &node_positions[col];
        if crate::channel::link_available(from, to, cfg) {
            out.set_target(n, Some(col));
        }
    }
    Ok(out)
}

/// One GU buffer transition: drain what was served, then add the fresh
/// arrivals.
pub fn gu_buffer_step(buffer_bits: f64, served_bits: f64, new_data_bits: f64) -> f64 {
    (buffer_bits - served_bits).max(0.0) + new_data_bits
}

/// Applies one slot of data movement. Raw volumes are capped at the sender's
/// start-of-slot buffer (GU uplinks at the GU buffer, relays at the UAV
/// buffer), received totals use the capped amounts, and UAV buffers advance.
/// Returns the flow report and the UAVs' next buffers.
pub fn uav_flow_step(
    uav_buffers_start: &[f64],
    gu_buffers_start: &[f64],
    uplink_raw: &[(usize, usize, f64)],
    relay_raw: &[(usize, usize, f64)],
) -> (FlowReport, Vec<f64>) {
    let n_uavs = uav_buffers_start.len();
    let mut gu_uplink_bits = vec![0.0; gu_buffers_start.len()];
    let mut collected = vec![0.0; n_uavs];
    for &(m, n, raw) in uplink_raw {
        let eff = raw.min(gu_buffers_start[m]).max(0.0);
        gu_uplink_bits[m] += eff;
        collected[n] += eff;
    }
    let mut uav_sent = vec![0.0; n_uavs];
    let mut relay_in = vec![0.0; n_uavs];
    let mut bs_delivered = vec![0.0; n_uavs];
    for &(n, col, raw) in relay_raw {
        let eff = raw.min(uav_buffers_start[n]).max(0.0);
        uav_sent[n] = eff;
        if col == 0 {
            bs_delivered[n] = eff;
        } else {
            relay_in[col - 1] += eff;
        }
    }
    let uav_received: Vec<f64> = collected
        .iter()
        .zip(&relay_in)
        .map(|(c, r)| c + r)
        .collect();
    let next: Vec<f64> = (0..n_uavs)
        .map(|n| (uav_buffers_start[n] - uav_sent[n]).max(0.0) + uav_received[n])
        .collect();
    (
        FlowReport { gu_uplink_bits, uav_received, uav_sent, bs_delivered },
        next,
    )
}

/// Total bits landing at the BS this slot.
pub fn bs_throughput(flow: &FlowReport) -> f64 {
    flow.bs_delivered.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::desk_config;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pos(x: f64, y: f64, z: f64) -> [f64; 3] {
        [x, y, z]
    }

    #[test]
    fn disjoint_proposals_pass_through() {
        let cfg = desk_config();
        let gus = [pos(0.0, 0.0, 0.0), pos(50.0, 0.0, 0.0)];
        let uavs = [pos(0.0, 0.0, 100.0), pos(50.0, 0.0, 100.0)];
        let a = resolve_association(&[vec![0], vec![1]], &gus, &uavs, &[true, true], &cfg);
        assert_eq!(a.uav_of(0), Some(0));
        assert_eq!(a.uav_of(1), Some(1));
    }

    #[test]
    fn contested_gu_goes_to_closer_uav() {
        let cfg = desk_config();
        let gus = [pos(0.0, 0.0, 0.0)];
        let uavs = [pos(100.0, 0.0, 100.0), pos(10.0, 0.0, 100.0)];
        let a = resolve_association(&[vec![0], vec![0]], &gus, &uavs, &[true], &cfg);
        assert_eq!(a.uav_of(0), Some(1));
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let cfg = desk_config();
        let gus = [pos(0.0, 0.0, 0.0)];
        let uavs = [pos(50.0, 0.0, 100.0), pos(-50.0, 0.0, 100.0)];
        let a = resolve_association(&[vec![0], vec![0]], &gus, &uavs, &[true], &cfg);
        assert_eq!(a.uav_of(0), Some(0));
    }

    #[test]
    fn infeasible_gu_is_dropped() {
        let cfg = desk_config();
        let gus = [pos(0.0, 0.0, 0.0)];
        let uavs = [pos(10.0, 0.0, 100.0)];
        let a = resolve_association(&[vec![0]], &gus, &uavs, &[false], &cfg);
        assert_eq!(a.uav_of(0), None);
    }

    #[test]
    fn all_zero_formation_is_valid() {
        let cfg = desk_config();
        let phi = Formation::new(2);
        let nodes = [pos(0.0, 0.0, 25.0), pos(10.0, 0.0, 100.0), pos(20.0, 0.0, 100.0)];
        let v = validate_formation(&phi, &nodes, &cfg).unwrap();
        assert_eq!(v, phi);
    }

    #[test]
    fn in_range_bs_link_retained() {
        let cfg = desk_config();
        let mut phi = Formation::new(1);
        phi.set_target(0, Some(0));
        let r = cfg.link_radius();
        let nodes = [pos(0.0, 0.0, 0.0), pos(r * 0.5, 0.0, 0.0)];
        let v = validate_formation(&phi, &nodes, &cfg).unwrap();
        assert!(v.targets_bs(0));
    }

    #[test]
    fn out_of_range_u2u_link_cleared() {
        let cfg = desk_config();
        let mut phi = Formation::new(2);
        phi.set_target(0, Some(2));
        let r = cfg.link_radius();
        let nodes = [
            pos(0.0, 0.0, 0.0),
            pos(0.0, 0.0, 100.0),
            pos(r + 50.0, 0.0, 100.0),
        ];
        let v = validate_formation(&phi, &nodes, &cfg).unwrap();
        assert_eq!(v.target(0), None);
    }

    #[test]
    fn malformed_matrix_rejected() {
        assert!(Formation::from_matrix(&[vec![0, 1]]).is_err()); // needs 2 cols for n=1
        assert!(Formation::from_matrix(&[vec![1, 1, 0], vec![0, 0, 0]]).is_err());
    }

    #[test]
    fn self_loop_rejected() {
        let mut phi = Formation::new(2);
        phi.set_target(0, Some(1));
        assert!(phi.check().is_err());
    }

    #[test]
    fn gu_buffer_basic_step() {
        assert_relative_eq!(gu_buffer_step(5.0, 2.0, 1.0), 4.0);
    }

    #[test]
    fn gu_buffer_overserved_clamps() {
        assert_relative_eq!(gu_buffer_step(1.5, 9.0, 0.7), 0.7);
    }

    #[test]
    fn gu_buffer_idle_unchanged() {
        assert_relative_eq!(gu_buffer_step(3.25, 0.0, 0.0), 3.25);
    }

    #[test]
    fn relay_capped_at_sender_buffer() {
        let (flow, next) = uav_flow_step(&[3.0, 0.0], &[], &[], &[(0, 2, 5.0)]);
        assert_relative_eq!(flow.uav_sent[0], 3.0);
        assert_relative_eq!(flow.uav_received[1], 3.0);
        assert_relative_eq!(next[0], 0.0);
        assert_relative_eq!(next[1], 3.0);
    }

    #[test]
    fn no_links_accumulates_collected() {
        let (flow, next) = uav_flow_step(&[2.0], &[10.0], &[(0, 0, 1.5)], &[]);
        assert_relative_eq!(flow.gu_uplink_bits[0], 1.5);
        assert_relative_eq!(next[0], 3.5);
    }

    #[test]
    fn two_hop_chain_delivers_over_two_slots() {
        // chain: UAV 1 -> UAV 0 -> BS, with UAV 0 holding 2 bits and UAV 1
        // holding 7 bits; generous raw rates
        let buffers = [2.0, 7.0];
        let relay = [(0usize, 0usize, 10.0), (1usize, 1usize, 10.0)];
        let (flow, next) = uav_flow_step(&buffers, &[], &[], &relay);
        assert_relative_eq!(flow.bs_delivered[0], 2.0);
        assert_relative_eq!(flow.bs_delivered[1], 0.0);
        assert_relative_eq!(next[0], 7.0); // received what UAV 1 forwarded
        assert_relative_eq!(next[1], 0.0);
        // second slot: UAV 0 can now deliver what UAV 1 sent
        let (flow2, next2) = uav_flow_step(&next, &[], &[], &relay);
        assert_relative_eq!(flow2.bs_delivered[0], 7.0);
        assert_relative_eq!(next2[0], 0.0);
    }

    #[test]
    fn throughput_sums_links() {
        let flow = FlowReport {
            gu_uplink_bits: vec![],
            uav_received: vec![0.0, 0.0],
            uav_sent: vec![2.5, 1.5],
            bs_delivered: vec![2.5, 1.5],
        };
        assert_relative_eq!(bs_throughput(&flow), 4.0);
        let empty = FlowReport {
            gu_uplink_bits: vec![],
            uav_received: vec![],
            uav_sent: vec![],
            bs_delivered: vec![],
        };
        assert_relative_eq!(bs_throughput(&empty), 0.0);
    }

    proptest! {
        #[test]
        fn resolve_always_satisfies_row_sums(
            seed in 0u64..500,
            n_uavs in 1usize..4,
            n_gus in 1usize..6,
        ) {
            use rand::Rng;
            let cfg = desk_config();
            let mut rng = crate::rng::stream(seed, crate::rng::StreamKind::Sampling, [0; 4]);
            let gus: Vec<[f64; 3]> = (0..n_gus)
                .map(|_| pos(rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0), 0.0))
                .collect();
            let uavs: Vec<[f64; 3]> = (0..n_uavs)
                .map(|_| pos(rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0), 100.0))
                .collect();
            let proposals: Vec<Vec<usize>> = (0..n_uavs)
                .map(|_| (0..n_gus).filter(|_| rng.gen_bool(0.6)).collect())
                .collect();
            let feasible: Vec<bool> = (0..n_gus).map(|_| rng.gen_bool(0.8)).collect();
            let a = resolve_association(&proposals, &gus, &uavs, &feasible, &cfg);
            let mat = a.matrix();
            for row in mat {
                prop_assert!(row.iter().map(|&v| v as u32).sum::<u32>() <= 1);
            }
        }

        #[test]
        fn resolve_is_gu_permutation_equivariant(seed in 0u64..200) {
            use rand::Rng;
            let cfg = desk_config();
            let mut rng = crate::rng::stream(seed, crate::rng::StreamKind::Sampling, [1; 4]);
            let n_gus = 4usize;
            let gus: Vec<[f64; 3]> = (0..n_gus)
                .map(|_| pos(rng.gen_range(-150.0..150.0), rng.gen_range(-150.0..150.0), 0.0))
                .collect();
            let uavs = [pos(-50.0, 0.0, 100.0), pos(50.0, 0.0, 100.0)];
            let proposals: Vec<Vec<usize>> = (0..2)
                .map(|_| (0..n_gus).filter(|_| rng.gen_bool(0.7)).collect())
                .collect();
            let feasible = vec![true; n_gus];
            let a = resolve_association(&proposals, &gus, &uavs, &feasible, &cfg);
            // reverse the GU indexing
            let perm: Vec<usize> = (0..n_gus).rev().collect();
            let gus_p: Vec<[f64; 3]> = perm.iter().map(|&m| gus[m]).collect();
            let proposals_p: Vec<Vec<usize>> = proposals
                .iter()
                .map(|set| set.iter().map(|&m| n_gus - 1 - m).collect())
                .collect();
            let a_p = resolve_association(&proposals_p, &gus_p, &uavs, &feasible, &cfg);
            for (new_m, &old_m) in perm.iter().enumerate() {
                prop_assert_eq!(a_p.uav_of(new_m), a.uav_of(old_m));
            }
        }

        #[test]
        fn validated_formation_obeys_constraints(
            seed in 0u64..500,
            n in 1usize..5,
        ) {
            use rand::Rng;
            let cfg = desk_config();
            let mut rng = crate::rng::stream(seed, crate::rng::StreamKind::Sampling, [2; 4]);
            let mut phi = Formation::new(n);
            for i in 0..n {
                if rng.gen_bool(0.7) {
                    phi.set_target(i, Some(rng.gen_range(0..=n)));
                }
            }
            // raw phi may contain self-loops; validation must clear them
            let nodes: Vec<[f64; 3]> = (0..=n)
                .map(|_| pos(rng.gen_range(-400.0..400.0), rng.gen_range(-400.0..400.0), 50.0))
                .collect();
            let v = validate_formation(&phi, &nodes, &cfg).unwrap();
            v.check().unwrap();
            for i in 0..n {
                if let Some(col) = v.target(i) {
                    prop_assert!(crate::channel::link_available(&nodes[i + 1], &nodes[col], &cfg));
                }
            }
        }

        #[test]
        fn buffers_stay_nonnegative(
            d0 in 0.0..10.0f64,
            d1 in 0.0..10.0f64,
            q in 0.0..10.0f64,
            raw in 0.0..20.0f64,
        ) {
            let (flow, next) = uav_flow_step(
                &[d0, d1],
                &[q],
                &[(0, 0, raw * 0.5)],
                &[(0, 2, raw), (1, 0, raw)],
            );
            for v in next {
                prop_assert!(v >= 0.0);
            }
            for v in flow.gu_uplink_bits {
                prop_assert!(v >= 0.0 && v <= q + 1e-12);
            }
        }
    }
}
