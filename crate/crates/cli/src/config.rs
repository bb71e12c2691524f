//! Scenario configuration: a strict TOML schema (unknown keys are hard
//! errors) and its conversion into the core scenario and search types.

use std::path::Path;

use serde::Deserialize;

use riscal_core::channel::{ArrayGeometry, ToneAllocation, WaveformConfig};
use riscal_core::estimator::{Aabb, InitSearchConfig};
use riscal_core::geometry::{EulerOrientation, Position3, RisState, UserState};
use riscal_core::scene::Scenario;

use crate::CliError;

/// Shipped reference scenario; also the default when no `--config` is given.
const REFERENCE_TOML: &str = include_str!("../../../configs/reference.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed for the sounding plan and all noise/sampling streams.
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_gain_seed")]
    pub gain_seed: u64,
    #[serde(default)]
    pub ofdma_comb: CombKind,
    pub waveform: WaveformSection,
    pub bs: BsSection,
    pub ris: RisSection,
    pub users: Vec<UserSection>,
    pub priors: PriorsSection,
    #[serde(default)]
    pub known: KnownSection,
}

fn default_trials() -> usize {
    100
}

fn default_gain_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombKind {
    #[default]
    Interleaved,
    Contiguous,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    pub transmissions: usize,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsSection {
    pub position: [f64; 3],
    pub array_rows: usize,
    pub array_cols: usize,
    /// Defaults to half the carrier wavelength.
    #[serde(default)]
    pub array_spacing_m: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisSection {
    pub position: [f64; 3],
    pub yaw_rad: f64,
    #[serde(default)]
    pub pitch_rad: f64,
    #[serde(default)]
    pub roll_rad: f64,
    pub array_rows: usize,
    pub array_cols: usize,
    #[serde(default)]
    pub array_spacing_m: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    pub position: [f64; 3],
    #[serde(default = "default_clock_offset")]
    pub clock_offset_s: f64,
}

fn default_clock_offset() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsSection {
    pub user_box_min: [f64; 3],
    pub user_box_max: [f64; 3],
    pub yaw_min_rad: f64,
    pub yaw_max_rad: f64,
    #[serde(default = "default_distance_step")]
    pub distance_step_m: f64,
    #[serde(default = "default_yaw_step_deg")]
    pub yaw_step_deg: f64,
}

fn default_distance_step() -> f64 {
    0.1
}

fn default_yaw_step_deg() -> f64 {
    0.1
}

/// State components treated as perfectly known when extracting bounds.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownSection {
    #[serde(default)]
    pub ris_y: bool,
    #[serde(default)]
    pub orientation: bool,
    #[serde(default)]
    pub user: bool,
}

impl KnownSection {
    /// Indices into the stacked state vector [p_R, o3, p_U1, beta_1, ...].
    pub fn state_indices(&self, users: usize) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.ris_y {
            idx.push(1);
        }
        if self.orientation {
            idx.push(3);
        }
        if self.user {
            for m in 0..users {
                idx.extend(4 + 4 * m..7 + 4 * m);
            }
        }
        idx
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn reference() -> Self {
        let config: Self =
            toml::from_str(REFERENCE_TOML).expect("shipped reference config parses");
        config.validate().expect("shipped reference config is valid");
        config
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.users.is_empty() {
            return Err(CliError::Config("at least one user required".into()));
        }
        self.scenario()
            .validate()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        self.search_config()
            .validate()
            .map_err(|e| CliError::Config(format!("priors: {e}")))?;
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        let waveform = WaveformConfig {
            carrier_hz: self.waveform.carrier_hz,
            bandwidth_hz: self.waveform.bandwidth_hz,
            subcarriers: self.waveform.subcarriers,
            transmissions: self.waveform.transmissions,
            tx_power_dbm: self.waveform.tx_power_dbm,
            noise_psd_dbm_hz: self.waveform.noise_psd_dbm_hz,
            noise_figure_db: self.waveform.noise_figure_db,
        };
        let lambda = waveform.wavelength_m();
        let spacing = |explicit: Option<f64>| explicit.unwrap_or(lambda / 2.0);
        Scenario {
            bs_position: Position3::from(self.bs.position),
            bs_array: ArrayGeometry {
                rows: self.bs.array_rows,
                cols: self.bs.array_cols,
                spacing_m: spacing(self.bs.array_spacing_m),
            },
            ris: RisState {
                position: Position3::from(self.ris.position),
                orientation: EulerOrientation {
                    yaw: self.ris.yaw_rad,
                    pitch: self.ris.pitch_rad,
                    roll: self.ris.roll_rad,
                },
            },
            ris_array: ArrayGeometry {
                rows: self.ris.array_rows,
                cols: self.ris.array_cols,
                spacing_m: spacing(self.ris.array_spacing_m),
            },
            users: self
                .users
                .iter()
                .map(|u| UserState {
                    position: Position3::from(u.position),
                    clock_offset: u.clock_offset_s,
                })
                .collect(),
            gain_seed: self.gain_seed,
            waveform,
        }
    }

    pub fn search_config(&self) -> InitSearchConfig {
        InitSearchConfig {
            user_prior: Aabb {
                min: Position3::from(self.priors.user_box_min),
                max: Position3::from(self.priors.user_box_max),
            },
            yaw_prior: (self.priors.yaw_min_rad, self.priors.yaw_max_rad),
            distance_step_m: self.priors.distance_step_m,
            yaw_step_rad: self.priors.yaw_step_deg.to_radians(),
        }
    }

    pub fn tone_allocation(&self) -> ToneAllocation {
        match self.ofdma_comb {
            CombKind::Interleaved => ToneAllocation::Interleaved,
            CombKind::Contiguous => ToneAllocation::Contiguous,
        }
    }
}
