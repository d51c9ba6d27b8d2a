use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_sim::{CbrSource, TrafficSource, TrafficSpec, VideoConfigError, VideoSession};
use crate::channel_models::{CqiGeneratorSpec, CqiSource, CqiSpecError};
use crate::edgeric::{EdgeRicError, PolicyKind};
use crate::ran_emu::{CellConfig, CellError, RanEmulator, RanError, UeContext};
use crate::rt_e2::{Rnti, Tti};

pub const ENV_SOCKET: &str = "RICWORLD_SOCKET";
pub const ENV_OUT: &str = "RICWORLD_OUT";
pub const ENV_TRACE_DIR: &str = "RICWORLD_TRACE_DIR";
pub const ENV_RIC_EXE: &str = "RICWORLD_RIC_EXE";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RunMode {
    /// RAN and RIC advance in lockstep as fast as possible.
    #[default]
    Logical,
    /// RIC on its own thread, RAN paced at 1 ms per TTI.
    RealtimeThread,
    /// RIC in a child process over a Unix socket, RAN paced at 1 ms per TTI.
    RealtimeProcess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub rnti: Rnti,
    pub cqi: CqiGeneratorSpec,
    pub traffic: TrafficSpec,
    #[serde(default = "one")]
    pub fallback_weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RicConfig {
    pub policy: PolicyKind,
    #[serde(default)]
    pub delay_ttis: Tti,
    /// Minimum wall time per decision in realtime modes.
    #[serde(default)]
    pub slow_decision_us: u64,
}

impl Default for RicConfig {
    fn default() -> Self {
        RicConfig {
            policy: PolicyKind::FixedEqual,
            delay_ttis: 0,
            slow_decision_us: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub socket: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_ttis: Tti,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub ric: RicConfig,
    #[serde(default)]
    pub io: IoConfig,
    pub ues: Vec<UeConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("duration_ttis must be positive")]
    ZeroDuration,
    #[error("scenario has no UEs")]
    NoUes,
    #[error("rnti {0} appears more than once")]
    DuplicateRnti(Rnti),
    #[error("ue {rnti}: cqi source: {source}")]
    Cqi { rnti: Rnti, source: CqiSpecError },
    #[error("ue {rnti}: traffic rate {rate} Mbps is negative or not finite")]
    BadRate { rnti: Rnti, rate: f64 },
    #[error("ue {rnti}: {source}")]
    Video {
        rnti: Rnti,
        source: VideoConfigError,
    },
    #[error("ue {rnti}: a {segment} byte segment does not fit a {capacity} byte queue")]
    SegmentTooLarge {
        rnti: Rnti,
        segment: u64,
        capacity: u64,
    },
    #[error("ue {rnti}: fallback weight {weight} is negative or not finite")]
    BadFallback { rnti: Rnti, weight: f64 },
    #[error("cell: {0}")]
    Cell(#[from] CellError),
    #[error("ric: {0}")]
    Ric(#[from] EdgeRicError),
    #[error("emulator: {0}")]
    Ran(#[from] RanError),
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the environment variable overrides.
    pub fn apply_env(&mut self) {
        if let Some(v) = std::env::var_os(ENV_SOCKET) {
            self.io.socket = Some(v.into());
        }
        if let Some(v) = std::env::var_os(ENV_OUT) {
            self.io.out_dir = Some(v.into());
        }
        if let Some(v) = std::env::var_os(ENV_TRACE_DIR) {
            self.io.trace_dir = Some(v.into());
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_ttis == 0 {
            return Err(ConfigError::ZeroDuration);
        }
        if self.ues.is_empty() {
            return Err(ConfigError::NoUes);
        }
        let mut seen = BTreeSet::new();
        for ue in &self.ues {
            if !seen.insert(ue.rnti) {
                return Err(ConfigError::DuplicateRnti(ue.rnti));
            }
            if !(ue.fallback_weight.is_finite() && ue.fallback_weight >= 0.0) {
                return Err(ConfigError::BadFallback {
                    rnti: ue.rnti,
                    weight: ue.fallback_weight,
                });
            }
            match &ue.traffic {
                TrafficSpec::Cbr { rate_mbps } if !(rate_mbps.is_finite() && *rate_mbps >= 0.0) => {
                    return Err(ConfigError::BadRate {
                        rnti: ue.rnti,
                        rate: *rate_mbps,
                    })
                }
                TrafficSpec::Video(v) => {
                    v.validate().map_err(|source| ConfigError::Video {
                        rnti: ue.rnti,
                        source,
                    })?;
                    if v.segment_bytes() > self.cell.queue_capacity_bytes {
                        return Err(ConfigError::SegmentTooLarge {
                            rnti: ue.rnti,
                            segment: v.segment_bytes(),
                            capacity: self.cell.queue_capacity_bytes,
                        });
                    }
                }
                _ => {}
            }
        }
        self.cell.validate()?;
        self.ric.policy.validate()?;
        Ok(())
    }

    /// Directory that relative trace paths resolve against.
    pub fn trace_base(&self) -> Option<PathBuf> {
        match (&self.io.trace_dir, &self.base_dir) {
            (Some(t), Some(b)) if t.is_relative() => Some(b.join(t)),
            (Some(t), _) => Some(t.clone()),
            (None, b) => b.clone(),
        }
    }

    pub fn has_video(&self) -> bool {
        self.ues
            .iter()
            .any(|u| matches!(u.traffic, TrafficSpec::Video(_)))
    }

    /// Per-UE seed derived from the scenario seed.
    pub fn ue_seed(seed: u64, rnti: Rnti) -> u64 {
        // splitmix64 finalizer over the pair
        let mut z = seed ^ (u64::from(rnti)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Fresh emulator for this scenario using `seed`.
    pub fn build_emulator(&self, seed: u64) -> Result<RanEmulator, ConfigError> {
        let base = self.trace_base();
        let mut ues = Vec::with_capacity(self.ues.len());
        for u in &self.ues {
            let cqi = CqiSource::build(&u.cqi, Self::ue_seed(seed, u.rnti), base.as_deref())
                .map_err(|source| ConfigError::Cqi {
                    rnti: u.rnti,
                    source,
                })?;
            let traffic = match &u.traffic {
                TrafficSpec::Cbr { rate_mbps } => {
                    TrafficSource::Cbr(CbrSource::new((rate_mbps * 1e6).round() as u64))
                }
                TrafficSpec::Video(v) => TrafficSource::Video(Box::new(
                    VideoSession::new(u.rnti, v.clone()).map_err(|source| ConfigError::Video {
                        rnti: u.rnti,
                        source,
                    })?,
                )),
                TrafficSpec::Idle => TrafficSource::Idle,
            };
            ues.push(UeContext::new(u.rnti, cqi, traffic));
        }
        let mut cell = self.cell.clone();
        cell.default_weights = self
            .ues
            .iter()
            .map(|u| (u.rnti, u.fallback_weight))
            .collect();
        Ok(RanEmulator::new(cell, ues)?)
    }

    /// Uplink delay of app state messages, taken from the first video UE.
    pub fn uplink_delay_ttis(&self) -> Tti {
        self.ues
            .iter()
            .find_map(|u| match &u.traffic {
                TrafficSpec::Video(v) => Some(v.uplink_delay_ttis),
                _ => None,
            })
            .unwrap_or(0)
    }
}
