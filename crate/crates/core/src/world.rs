//! Geometry, point-mass kinematics, safety indicators, and GU coverage.

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::SimError;

/// A UAV's observable state: planar position at fixed altitude plus its
/// buffered data volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    /// Position in meters; z is the fixed flight altitude.
    pub position: [f64; 3],
    /// Buffered data awaiting forwarding, bits.
    pub buffer_bits: f64,
}

impl UavState {
    pub fn new(x: f64, y: f64, cfg: &WorldConfig) -> Self {
        UavState {
            position: [x, y, cfg.world.altitude],
            buffer_bits: 0.0,
        }
    }

    /// Observation vector (x, y, buffer) in raw units.
    pub fn observation(&self) -> [f64; 3] {
        [self.position[0], self.position[1], self.buffer_bits]
    }
}

/// A ground user: fixed position on the ground, a finite battery, and a data
/// buffer fed by its sensing process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuState {
    /// Position in meters; z = 0.
    pub position: [f64; 3],
    /// Battery level, joules, in [0, E_max].
    pub battery_joules: f64,
    /// Buffered sensing data, bits.
    pub buffer_bits: f64,
}

impl GuState {
    pub fn new(x: f64, y: f64, cfg: &WorldConfig) -> Self {
        GuState {
            position: [x, y, 0.0],
            battery_joules: cfg.power.init_battery_frac * cfg.power.e_max,
            buffer_bits: 0.0,
        }
    }
}

pub fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn dist_horizontal(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Advances the UAVs during the movement window. Commanded velocities whose
/// magnitude exceeds v_max are rescaled to v_max; the displacement over the
/// phase is v * t_e. Positions are clamped to the area bounds and altitude is
/// left unchanged.
pub fn step_kinematics(
    states: &[UavState],
    velocities: &[[f64; 2]],
    cfg: &WorldConfig,
) -> Result<Vec<UavState>, SimError> {
    if states.len() != velocities.len() {
        return Err(SimError::Input(format!(
            "{} states but {} velocities",
            states.len(),
            velocities.len()
        )));
    }
    let w = cfg.world.area_half_width;
    let out = states
        .iter()
        .zip(velocities)
        .map(|(s, v)| {
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let scale = if speed > cfg.world.v_max {
                cfg.world.v_max / speed
            } else {
                1.0
            };
            let x = (s.position[0] + v[0] * scale * cfg.world.t_e).clamp(-w, w);
            let y = (s.position[1] + v[1] * scale * cfg.world.t_e).clamp(-w, w);
            UavState {
                position: [x, y, s.position[2]],
                buffer_bits: s.buffer_bits,
            }
        })
        .collect();
    Ok(out)
}

/// Per-UAV count of satisfied safety indicators: for each ordered peer pair
/// (n, n'), one indicator for the speed bound and one for the pairwise
/// separation. A lone UAV has no peers and scores zero.
pub fn safety_report(
    states: &[UavState],
    prev: &[UavState],
    cfg: &WorldConfig,
) -> Result<Vec<u32>, SimError> {
    if states.len() != prev.len() {
        return Err(SimError::Input(format!(
            "{} states but {} previous states",
            states.len(),
            prev.len()
        )));
    }
    let n = states.len();
    let mut z = vec![0u32; n];
    for i in 0..n {
        let speed = dist3(&states[i].position, &prev[i].position) / cfg.world.t_e;
        let speed_ok = speed <= cfg.world.v_max + 1e-9;
        for j in 0..n {
            if i == j {
                continue;
            }
            if speed_ok {
                z[i] += 1;
            }
            if dist3(&states[i].position, &states[j].position) >= cfg.world.d_min {
                z[i] += 1;
            }
        }
    }
    Ok(z)
}

/// Indices of GUs within the UAV's horizontal coverage radius.
pub fn coverage_set(uav: &UavState, gus: &[GuState], cfg: &WorldConfig) -> Vec<usize> {
    gus.iter()
        .enumerate()
        .filter(|(_, g)| dist_horizontal(&uav.position, &g.position) <= cfg.world.coverage_radius)
        .map(|(m, _)| m)
        .collect()
}
