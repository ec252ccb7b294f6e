//! Channel realization, beamforming, SINR, and per-phase achievable data
//! volumes for ground-uplink, inter-UAV, and UAV-to-BS links.
//!
//! Large-scale gain follows an inverse-distance law anchored at the unit
//! distance gain; small-scale fading is Rician with a deterministic
//! geometry-derived steering component. All rates are in bits (log base 2).

use num_complex::Complex64;
use rand::Rng;

use crate::config::WorldConfig;
use crate::error::SimError;
use crate::linkplan::{Association, Formation};
use crate::world::dist3;

/// Complex gain vector of length F between a transmit/receive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub Vec<Complex64>);

impl ChannelVector {
    pub fn zeros(n_antennas: usize) -> Self {
        ChannelVector(vec![Complex64::new(0.0, 0.0); n_antennas])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamRole {
    /// Downlink wireless energy transfer; norm squared bounded by the power
    /// budget.
    Energy,
    /// Uplink reception; unit norm.
    Receive,
    /// Forward transmission; unit norm.
    Relay,
}

/// Beamforming vector of length F with its phase role.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector {
    pub weights: Vec<Complex64>,
    pub role: BeamRole,
}

impl BeamVector {
    pub fn power(&self) -> f64 {
        self.weights.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Inner product sum_f h_f w_f; received power is its squared magnitude.
pub fn pair_gain(h: &ChannelVector, w: &BeamVector) -> Complex64 {
    h.0.iter()
        .zip(&w.weights)
        .map(|(a, b)| a * b)
        .sum()
}

/// Deterministic unit-modulus steering component of the small-scale channel,
/// derived from the link direction.
pub fn los_steering(a: &[f64; 3], b: &[f64; 3], n_antennas: usize) -> Vec<Complex64> {
    let d = dist3(a, b).max(1e-12);
    let ux = (b[0] - a[0]) / d;
    (0..n_antennas)
        .map(|f| Complex64::from_polar(1.0, std::f64::consts::PI * f as f64 * ux))
        .collect()
}

/// Fading-averaged deterministic channel: the large-scale amplitude times the
/// steering component alone. Used for expected-value evaluations.
pub fn los_channel(
    a: &[f64; 3],
    b: &[f64; 3],
    cfg: &WorldConfig,
) -> Result<ChannelVector, SimError> {
    let d = dist3(a, b);
    if d <= 0.0 {
        return Err(SimError::Input(
            "channel undefined at zero distance".into(),
        ));
    }
    let amp = cfg.channel.omega0.sqrt() / d;
    Ok(ChannelVector(
        los_steering(a, b, cfg.world.n_antennas)
            .into_iter()
            .map(|s| s * amp)
            .collect(),
    ))
}

/// Draws one channel realization between two positions: the inverse-distance
/// large-scale amplitude times a Rician small-scale vector with unit average
/// power per antenna.
pub fn realize_channel(
    a: &[f64; 3],
    b: &[f64; 3],
    rng: &mut impl Rng,
    cfg: &WorldConfig,
) -> Result<ChannelVector, SimError> {
    let d = dist3(a, b);
    if d <= 0.0 {
        return Err(SimError::Input(
            "channel undefined at zero distance".into(),
        ));
    }
    let amp = cfg.channel.omega0.sqrt() / d;
    let k = cfg.k_rice();
    let los_w = (k / (k + 1.0)).sqrt();
    let nlos_w = (1.0 / (k + 1.0)).sqrt();
    let steer = los_steering(a, b, cfg.world.n_antennas);
    let h = steer
        .into_iter()
        .map(|s| {
            let g = Complex64::new(gauss(rng), gauss(rng)) / 2f64.sqrt();
            (s * los_w + g * nlos_w) * amp
        })
        .collect();
    Ok(ChannelVector(h))
}

/// Standard normal via Box-Muller; keeps the draw count per link fixed.
fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Maximum-ratio beam toward `h` carrying the full power budget.
pub fn mrt_beam(h: &ChannelVector, power_budget: f64) -> Result<BeamVector, SimError> {
    let norm = h.norm();
    if norm <= 0.0 {
        return Err(SimError::Input("cannot beamform toward a zero channel".into()));
    }
    let scale = power_budget.sqrt() / norm;
    Ok(BeamVector {
        weights: h.0.iter().map(|c| c.conj() * scale).collect(),
        role: BeamRole::Energy,
    })
}

/// Equal-power beam with no phase steering.
pub fn isotropic_beam(n_antennas: usize, power_budget: f64) -> BeamVector {
    let w = (power_budget / n_antennas as f64).sqrt();
    BeamVector {
        weights: vec![Complex64::new(w, 0.0); n_antennas],
        role: BeamRole::Energy,
    }
}

/// Uplink SINR per scheduled (GU, UAV) pair. The interference at a UAV comes
/// from every other active GU in the network, regardless of which UAV it is
/// associated with. An empty schedule yields an empty result.
pub fn uplink_sinr(
    psi: &Association,
    channels: &[Vec<ChannelVector>],
    gu_powers: &[f64],
    receive_beams: &[BeamVector],
    noise_power: f64,
) -> Vec<(usize, usize, f64)> {
    let active: Vec<usize> = (0..psi.n_gus()).filter(|&m| psi.uav_of(m).is_some()).collect();
    let mut result = Vec::new();
    for &m in &active {
        let n = psi.uav_of(m).expect("active GU has an association");
        let beam = &receive_beams[n];
        let signal = gu_powers[m] * pair_gain(&channels[m][n], beam).norm_sqr();
        let interference: f64 = active
            .iter()
            .filter(|&&m2| m2 != m)
            .map(|&m2| gu_powers[m2] * pair_gain(&channels[m2][n], beam).norm_sqr())
            .sum();
        result.push((m, n, signal / (noise_power + interference)));
    }
    result
}

/// Achievable uplink volume for one pair over the collection phase.
pub fn uplink_volume(gamma: f64, scheduled: bool, t_s: f64) -> f64 {
    if scheduled {
        t_s * (1.0 + gamma).log2()
    } else {
        0.0
    }
}

/// Per-link relay SINR and raw achievable volume over the forward phase.
/// Interference at a receiver comes only from the other UAVs transmitting to
/// that same receiver. Links into the BS (column 0) are computed identically.
/// Returns (sender, target column, sinr, raw bits).
pub fn relay_sinr_and_volume(
    phi: &Formation,
    channels: &[Vec<ChannelVector>],
    relay_powers: &[f64],
    relay_beams: &[BeamVector],
    noise_power: f64,
    t_r: f64,
) -> Result<Vec<(usize, usize, f64, f64)>, SimError> {
    phi.check()?;
    let mut result = Vec::new();
    for n in 0..phi.n_uavs() {
        let Some(col) = phi.target(n) else { continue };
        let signal =
            relay_powers[n] * pair_gain(&channels[n][col], &relay_beams[n]).norm_sqr();
        let interference: f64 = (0..phi.n_uavs())
            .filter(|&k| k != n && phi.target(k) == Some(col))
            .map(|k| relay_powers[k] * pair_gain(&channels[k][col], &relay_beams[k]).norm_sqr())
            .sum();
        let gamma = signal / (noise_power + interference);
        result.push((n, col, gamma, t_r * (1.0 + gamma).log2()));
    }
    Ok(result)
}

/// Whether a U2U/U2B link is usable: the interference-free MRT SNR under the
/// large-scale gain alone meets the configured threshold. Equivalent to a
/// distance test against `cfg.link_radius()`.
pub fn link_available(a: &[f64; 3], b: &[f64; 3], cfg: &WorldConfig) -> bool {
    let d = dist3(a, b);
    if d <= 0.0 {
        return true;
    }
    let snr = cfg.power.p_uav * cfg.world.n_antennas as f64 * cfg.channel.omega0
        / (d * d * cfg.channel.noise_power);
    snr >= cfg.channel.link_snr_threshold
}
