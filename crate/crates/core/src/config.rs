//! TOML configuration. Every section and key is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, ManagerConfig, PhyConfig};
use crate::device::DeviceConfig;
use crate::error::ConfigError;
use crate::frontend::FrontendConfig;
use crate::hierarchy::LlcConfig;
use crate::metrics::EnergyParams;
use crate::protocol::{AddressMap, TimingParams, WORD_BYTES};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "RPCSIM_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Bursts completed before the measurement window opens.
    pub warmup_bursts: u64,
    /// Sweep points also wait for this many bytes before measuring, so all
    /// burst sizes share the same window position in the traffic stream.
    pub warmup_bytes: u64,
    /// Cycles without progress before a run is declared deadlocked.
    pub deadlock_cycles: u64,
    pub min_burst: u64,
    pub max_burst: u64,
    /// Bytes measured per sweep point, at least `min_measured_bursts` bursts.
    pub measure_bytes: u64,
    pub min_measured_bursts: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 0,
            warmup_bursts: 10,
            warmup_bytes: 10 * 65536,
            deadlock_cycles: 1_000_000,
            min_burst: 8,
            max_burst: 65536,
            measure_bytes: 1 << 20,
            min_measured_bursts: 16,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("harness.min_burst", self.min_burst),
            ("harness.max_burst", self.max_burst),
        ] {
            if v < 8 || !v.is_power_of_two() {
                return Err(ConfigError::invalid(
                    key,
                    "must be a power of two of at least 8",
                ));
            }
        }
        if self.min_burst > self.max_burst {
            return Err(ConfigError::invalid(
                "harness.min_burst",
                "exceeds harness.max_burst",
            ));
        }
        if self.deadlock_cycles == 0 {
            return Err(ConfigError::invalid(
                "harness.deadlock_cycles",
                "must be greater than zero",
            ));
        }
        if self.min_measured_bursts == 0 {
            return Err(ConfigError::invalid(
                "harness.min_measured_bursts",
                "must be greater than zero",
            ));
        }
        Ok(())
    }

    /// Powers of two from `min_burst` to `max_burst`.
    pub fn burst_sizes(&self) -> Vec<u64> {
        std::iter::successors(Some(self.min_burst), |&s| Some(s * 2))
            .take_while(|&s| s <= self.max_burst)
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    /// Per-cycle bus beat dump.
    pub bus_trace: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub timing: TimingParams,
    pub device: DeviceConfig,
    pub manager: ManagerConfig,
    pub controller: ControllerConfig,
    pub phy: PhyConfig,
    pub frontend: FrontendConfig,
    pub llc: LlcConfig,
    pub energy: EnergyParams,
    pub harness: HarnessConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn address_map(&self) -> AddressMap {
        AddressMap {
            banks: self.device.banks,
            rows: self.device.rows,
            page_bytes: self.timing.page_bytes,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.timing.validate()?;
        self.device.validate()?;
        self.manager.validate(&self.timing, self.device.banks)?;
        self.controller.validate()?;
        self.frontend.validate()?;
        self.llc.validate()?;
        self.energy.validate()?;
        self.harness.validate()?;
        let capacity = self.address_map().capacity();
        if self.llc.enabled && self.llc.spm_base < capacity {
            return Err(ConfigError::invalid(
                "llc.spm_base",
                "overlaps the DRAM address range",
            ));
        }
        if self.frontend.address_bits < 64 && capacity > 1 << self.frontend.address_bits {
            return Err(ConfigError::invalid(
                "frontend.address_bits",
                "too narrow for the device capacity",
            ));
        }
        if (self.llc.line_bytes as usize) < WORD_BYTES && self.llc.enabled {
            return Err(ConfigError::invalid(
                "llc.line_bytes",
                "must cover at least one memory word",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn dotted_sections_override() {
        let cfg = Config::from_toml("[timing]\nt_rcd = 9\n[frontend]\nwrite_buffer_bytes = 32\n")
            .unwrap();
        assert_eq!(cfg.timing.t_rcd, 9);
        assert_eq!(cfg.frontend.write_buffer_bytes, 32);
        assert_eq!(cfg.llc, LlcConfig::default());
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = Config::from_toml("[timing]\nt_bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("t_bogus"), "{err}");
        let err = Config::from_toml("[nonsense]\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");
    }

    #[test]
    fn invalid_value_names_the_key() {
        let err = Config::from_toml("[llc]\nways = 4\nspm_way_mask = 16\n").unwrap_err();
        assert!(err.to_string().contains("llc.spm_way_mask"), "{err}");
    }

    #[test]
    fn round_trips() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn burst_sizes_cover_range() {
        let h = HarnessConfig::default();
        let sizes = h.burst_sizes();
        assert_eq!(sizes.first(), Some(&8));
        assert_eq!(sizes.last(), Some(&65536));
        assert_eq!(sizes.len(), 14);
    }
}
