//! Data-bus cycle accounting and the event-counting energy model.

use std::ops::Sub;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EnergyError};
use crate::protocol::{peak_bandwidth, RpcCommand, WordGeometry};

/// Coarse classification of one data-bus cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeatClass {
    Idle,
    Command,
    Mask,
    Strobe,
    Data,
}

/// Cycle accounting on the shared data bus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BusStats {
    pub total_cycles: u64,
    pub data_cycles: u64,
    pub command_cycles: u64,
    pub mask_cycles: u64,
    pub preamble_postamble_cycles: u64,
    pub idle_cycles: u64,
    pub bytes_transferred: u64,
}

impl BusStats {
    pub fn record(&mut self, class: BeatClass) {
        self.total_cycles += 1;
        match class {
            BeatClass::Idle => self.idle_cycles += 1,
            BeatClass::Command => self.command_cycles += 1,
            BeatClass::Mask => self.mask_cycles += 1,
            BeatClass::Strobe => self.preamble_postamble_cycles += 1,
            BeatClass::Data => {
                self.data_cycles += 1;
                self.bytes_transferred += WordGeometry::RPC.bytes_per_bus_cycle as u64;
            }
        }
    }

    /// Category counters add up to the elapsed cycles.
    pub fn is_conserved(&self) -> bool {
        self.data_cycles
            + self.command_cycles
            + self.mask_cycles
            + self.preamble_postamble_cycles
            + self.idle_cycles
            == self.total_cycles
            && self.bytes_transferred
                == self.data_cycles * WordGeometry::RPC.bytes_per_bus_cycle as u64
    }
}

impl Sub for BusStats {
    type Output = BusStats;

    fn sub(self, rhs: BusStats) -> BusStats {
        BusStats {
            total_cycles: self.total_cycles - rhs.total_cycles,
            data_cycles: self.data_cycles - rhs.data_cycles,
            command_cycles: self.command_cycles - rhs.command_cycles,
            mask_cycles: self.mask_cycles - rhs.mask_cycles,
            preamble_postamble_cycles: self.preamble_postamble_cycles
                - rhs.preamble_postamble_cycles,
            idle_cycles: self.idle_cycles - rhs.idle_cycles,
            bytes_transferred: self.bytes_transferred - rhs.bytes_transferred,
        }
    }
}

/// Device commands issued, by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub activates: u64,
    pub reads: u64,
    pub writes: u64,
    pub precharges: u64,
    pub refreshes: u64,
    pub zq_calibrations: u64,
    pub init_steps: u64,
}

impl EventCounts {
    pub fn record(&mut self, cmd: &RpcCommand) {
        match cmd {
            RpcCommand::Activate { .. } => self.activates += 1,
            RpcCommand::Read { .. } => self.reads += 1,
            RpcCommand::Write { .. } => self.writes += 1,
            RpcCommand::Precharge { .. } => self.precharges += 1,
            RpcCommand::Refresh { banks } => self.refreshes += banks.iter().count() as u64,
            RpcCommand::ZqCal => self.zq_calibrations += 1,
            RpcCommand::InitStep { .. } => self.init_steps += 1,
        }
    }

    pub fn commands(&self) -> u64 {
        self.activates
            + self.reads
            + self.writes
            + self.precharges
            + self.refreshes
            + self.zq_calibrations
            + self.init_steps
    }
}

impl Sub for EventCounts {
    type Output = EventCounts;

    fn sub(self, rhs: EventCounts) -> EventCounts {
        EventCounts {
            activates: self.activates - rhs.activates,
            reads: self.reads - rhs.reads,
            writes: self.writes - rhs.writes,
            precharges: self.precharges - rhs.precharges,
            refreshes: self.refreshes - rhs.refreshes,
            zq_calibrations: self.zq_calibrations - rhs.zq_calibrations,
            init_steps: self.init_steps - rhs.init_steps,
        }
    }
}

/// Relative bus utilization; zero for an empty window.
pub fn utilization(stats: &BusStats) -> f64 {
    if stats.total_cycles == 0 {
        0.0
    } else {
        stats.data_cycles as f64 / stats.total_cycles as f64
    }
}

/// Achieved data throughput in bytes per second.
pub fn throughput(stats: &BusStats, freq_mhz: f64) -> f64 {
    utilization(stats) * peak_bandwidth(freq_mhz)
}

/// Per-event energy coefficients. Energies in picojoules, background power
/// in milliwatts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    pub e_data_per_byte: f64,
    pub e_command: f64,
    pub e_activate: f64,
    pub e_precharge: f64,
    pub e_refresh: f64,
    pub e_idle_per_cycle: f64,
    pub p_background: f64,
}

impl Default for EnergyParams {
    /// `p_background` is the value `calibrate-energy` produces for the
    /// sequential 64 KiB write workload at a 250 pJ/B target.
    fn default() -> Self {
        EnergyParams {
            e_data_per_byte: 30.0,
            e_command: 20.0,
            e_activate: 600.0,
            e_precharge: 300.0,
            e_refresh: 2500.0,
            e_idle_per_cycle: 10.0,
            p_background: 168.74,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("energy.e_data_per_byte", self.e_data_per_byte),
            ("energy.e_command", self.e_command),
            ("energy.e_activate", self.e_activate),
            ("energy.e_precharge", self.e_precharge),
            ("energy.e_refresh", self.e_refresh),
            ("energy.e_idle_per_cycle", self.e_idle_per_cycle),
            ("energy.p_background", self.p_background),
        ];
        for (key, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::invalid(
                    key,
                    "must be a finite non-negative number",
                ));
            }
        }
        Ok(())
    }

    /// Total energy in picojoules spent over a window.
    pub fn window_energy(&self, stats: &BusStats, events: &EventCounts, freq_mhz: f64) -> f64 {
        let seconds = stats.total_cycles as f64 / (freq_mhz * 1e6);
        self.e_data_per_byte * stats.bytes_transferred as f64
            + self.e_command * events.commands() as f64
            + self.e_activate * events.activates as f64
            + self.e_precharge * events.precharges as f64
            + self.e_refresh * events.refreshes as f64
            + self.e_idle_per_cycle * stats.idle_cycles as f64
            // mW * s = mJ = 1e9 pJ
            + self.p_background * seconds * 1e9
    }
}

/// Interface energy per transferred byte in pJ/B.
pub fn energy_per_byte(
    stats: &BusStats,
    events: &EventCounts,
    params: &EnergyParams,
    freq_mhz: f64,
) -> Result<f64, EnergyError> {
    if stats.bytes_transferred == 0 {
        return Err(EnergyError::ZeroBytes);
    }
    Ok(params.window_energy(stats, events, freq_mhz) / stats.bytes_transferred as f64)
}

/// Solves for the background power that makes the window hit `target_pj_per_byte`.
/// Clamps at zero when the event energies alone already exceed the target.
pub fn calibrate_background(
    stats: &BusStats,
    events: &EventCounts,
    params: &EnergyParams,
    freq_mhz: f64,
    target_pj_per_byte: f64,
) -> Result<EnergyParams, EnergyError> {
    if stats.bytes_transferred == 0 || stats.total_cycles == 0 {
        return Err(EnergyError::ZeroBytes);
    }
    let without_background = EnergyParams {
        p_background: 0.0,
        ..params.clone()
    };
    let event_energy = without_background.window_energy(stats, events, freq_mhz);
    let seconds = stats.total_cycles as f64 / (freq_mhz * 1e6);
    let needed = target_pj_per_byte * stats.bytes_transferred as f64 - event_energy;
    Ok(EnergyParams {
        p_background: (needed / (seconds * 1e9)).max(0.0),
        ..params.clone()
    })
}
