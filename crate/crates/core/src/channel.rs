//! Two-path uplink channel synthesis: steering vectors, per-subcarrier
//! channel vectors, random sounding plans and noise statistics.
//!
//! Powers are carried in milliwatts throughout (transmit power and noise
//! PSD enter in dBm / dBm-per-Hz).

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::{Error, Result, SPEED_OF_LIGHT};

/// OFDM numerology and link-budget inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformConfig {
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Total sounding bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Number of subcarriers K.
    pub subcarriers: usize,
    /// Number of transmissions G.
    pub transmissions: usize,
    /// Total transmit power per user in dBm.
    pub tx_power_dbm: f64,
    /// Noise power spectral density in dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Receiver noise figure in dB.
    pub noise_figure_db: f64,
}

impl WaveformConfig {
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 || self.transmissions == 0 {
            return Err(Error::InvalidConfig("subcarriers and transmissions must be >= 1".into()));
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidConfig("carrier and bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// Noise power per combined observation in mW: thermal PSD plus noise
/// figure, integrated over one subcarrier spacing.
pub fn noise_variance_mw(cfg: &WaveformConfig) -> f64 {
    let dbm = cfg.noise_psd_dbm_hz + cfg.noise_figure_db;
    10f64.powf(dbm / 10.0) * cfg.subcarrier_spacing_hz()
}

/// Pilot symbol energy per subcarrier in mW: the total transmit power is
/// split equally across the `tones_used` subcarriers the transmitter
/// actually occupies (all K for a single user, K/M per user under OFDMA).
pub fn pilot_energy_mw(cfg: &WaveformConfig, tones_used: usize) -> f64 {
    10f64.powf(cfg.tx_power_dbm / 10.0) / tones_used as f64
}

/// How subcarriers are split across simultaneously sounding users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneAllocation {
    /// User m takes every subcarrier k with k = m (mod M).
    Interleaved,
    /// User m takes the m-th contiguous chunk of ceil(K/M) subcarriers.
    Contiguous,
}

/// Subcarrier indices assigned to `user` out of `users` total. The
/// allocations partition 0..subcarriers with no overlap.
pub fn user_tones(
    alloc: ToneAllocation,
    subcarriers: usize,
    users: usize,
    user: usize,
) -> Vec<usize> {
    assert!(user < users, "user index {user} out of {users}");
    match alloc {
        ToneAllocation::Interleaved => (user..subcarriers).step_by(users).collect(),
        ToneAllocation::Contiguous => {
            let chunk = subcarriers.div_ceil(users);
            (user * chunk..((user + 1) * chunk).min(subcarriers)).collect()
        }
    }
}

/// Uniform planar array in its local frame: elements span the local y-z
/// plane (every local x-coordinate is zero) and are centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in meters.
    pub spacing_m: f64,
}

impl ArrayGeometry {
    /// Square array with half-wavelength spacing.
    pub fn square_half_wavelength(side: usize, wavelength_m: f64) -> Self {
        Self { rows: side, cols: side, spacing_m: wavelength_m / 2.0 }
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Element positions in the array frame, centered so they sum to zero.
    pub fn element_positions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.element_count());
        let yc = (self.cols as f64 - 1.0) / 2.0;
        let zc = (self.rows as f64 - 1.0) / 2.0;
        for r in 0..self.rows {
            let z = (r as f64 - zc) * self.spacing_m;
            for c in 0..self.cols {
                let y = (c as f64 - yc) * self.spacing_m;
                out.push(Vector3::new(0.0, y, z));
            }
        }
        out
    }
}

/// Per-transmission RIS phase profiles and BS combiners, plus the common
/// pilot symbol. RIS coefficients are unit modulus; combiners are unit
/// modulus scaled to unit norm so combining leaves the noise variance
/// unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundingPlan {
    /// `transmissions x n_ris` unit-modulus coefficients.
    pub ris_profiles: Vec<Vec<Complex64>>,
    /// `transmissions x n_bs` combiner weights with unit Euclidean norm.
    pub combiners: Vec<Vec<Complex64>>,
    /// Pilot symbol shared by all (g, k); unit modulus, energy handled separately.
    pub pilot: Complex64,
}

impl SoundingPlan {
    pub fn transmissions(&self) -> usize {
        self.ris_profiles.len()
    }
}

/// Draw a sounding plan with uniformly random phases, reproducible from the
/// seed.
pub fn make_sounding_plan(seed: u64, transmissions: usize, n_ris: usize, n_bs: usize) -> SoundingPlan {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scale = 1.0 / (n_bs as f64).sqrt();
    let mut ris_profiles = Vec::with_capacity(transmissions);
    let mut combiners = Vec::with_capacity(transmissions);
    for _ in 0..transmissions {
        let profile: Vec<Complex64> = (0..n_ris)
            .map(|_| Complex64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
            .collect();
        let combiner: Vec<Complex64> = (0..n_bs)
            .map(|_| Complex64::from_polar(scale, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
            .collect();
        ris_profiles.push(profile);
        combiners.push(combiner);
    }
    SoundingPlan { ris_profiles, combiners, pilot: Complex64::new(1.0, 0.0) }
}

/// Complex path gains of the direct and relayed paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains {
    pub alpha_bu: Complex64,
    pub alpha_r: Complex64,
}

impl ChannelGains {
    /// Nuisance-parameter view: real and imaginary parts.
    pub fn as_parts(&self) -> [f64; 4] {
        [self.alpha_bu.re, self.alpha_r.re, self.alpha_bu.im, self.alpha_r.im]
    }
}

/// Free-space gain amplitudes with uniformly random phases. The direct path
/// follows a one-hop free-space law, the relayed path the product of its two
/// hops.
pub fn path_gains(d_bu: f64, d_br: f64, d_ru: f64, wavelength_m: f64, seed: u64) -> ChannelGains {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let amp_bu = wavelength_m / (4.0 * std::f64::consts::PI * d_bu);
    let amp_r = wavelength_m * wavelength_m
        / ((4.0 * std::f64::consts::PI).powi(2) * d_br * d_ru);
    let ph_bu = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let ph_r = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    ChannelGains {
        alpha_bu: Complex64::from_polar(amp_bu, ph_bu),
        alpha_r: Complex64::from_polar(amp_r, ph_r),
    }
}

/// Steering vector of an array toward a local direction: element `i` is
/// `exp(j 2pi/lambda p_i . t)`.
pub fn steering_vector(
    elements: &[Vector3<f64>],
    local_dir: &Vector3<f64>,
    wavelength_m: f64,
) -> Vec<Complex64> {
    let kappa = 2.0 * std::f64::consts::PI / wavelength_m;
    elements.iter().map(|p| Complex64::from_polar(1.0, kappa * p.dot(local_dir))).collect()
}

/// Direct-path channel vector at subcarrier `k`.
pub fn bu_channel(
    alpha_bu: Complex64,
    a_bu: &[Complex64],
    tau_bu: f64,
    spacing_hz: f64,
    k: usize,
) -> Vec<Complex64> {
    let phase = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * spacing_hz * k as f64 * tau_bu);
    a_bu.iter().map(|a| alpha_bu * a * phase).collect()
}

/// RIS-relayed channel vector at transmission `g`, subcarrier `k`. The RIS
/// response collapses to the scalar `a_RB^T Omega_g a_RU`.
pub fn ris_channel(
    alpha_r: Complex64,
    a_br: &[Complex64],
    a_rb: &[Complex64],
    a_ru: &[Complex64],
    ris_profile: &[Complex64],
    tau_r: f64,
    spacing_hz: f64,
    k: usize,
) -> Result<Vec<Complex64>> {
    if a_rb.len() != a_ru.len() || a_rb.len() != ris_profile.len() {
        return Err(Error::DimensionMismatch { expected: a_rb.len(), got: ris_profile.len() });
    }
    let inner: Complex64 = a_rb
        .iter()
        .zip(a_ru.iter())
        .zip(ris_profile.iter())
        .map(|((rb, ru), w)| rb * w * ru)
        .sum();
    let phase = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * spacing_hz * k as f64 * tau_r);
    Ok(a_br.iter().map(|a| alpha_r * a * inner * phase).collect())
}

/// Noise-free received symbol: combiner applied to the channel, scaled by
/// the pilot.
pub fn noise_free_symbol(
    combiner: &[Complex64],
    channel: &[Complex64],
    pilot: Complex64,
) -> Result<Complex64> {
    if combiner.len() != channel.len() {
        return Err(Error::DimensionMismatch { expected: combiner.len(), got: channel.len() });
    }
    let combined: Complex64 = combiner.iter().zip(channel.iter()).map(|(w, h)| w * h).sum();
    Ok(combined * pilot)
}
